//! C ABI over the simulator.
//!
//! Every call returns a [`SparfStatus`]; on failure the message is available from
//! [`sparfsim_last_error`] on the same thread. Objects are opaque handles released with
//! their `_free` function. Panics are caught at the boundary and reported as
//! `SPARF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sparfsim::attention::{dense_attention, sparf_attention, Axis, HeadConfig, HeadTensors, SelectionMask};
use sparfsim::cli::config::parse_scenarios;
use sparfsim::layout::{FlashGeometry, KvLayout, KvTensor, LayoutConfig};
use sparfsim::system::{kv_cache_bytes, simulate, ModelSpec, Scenario, ScenarioReport, Sparsity, SystemKind, Workload};
use sparfsim::tensor::Matrix;
use sparfsim::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Capacity = 4,
    Mapping = 5,
    Numerical = 6,
    Io = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparfSystem {
    Instinfer = 0,
    HostOffload = 1,
    SsdOffload = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparfTensor {
    K = 0,
    V = 1,
}

/// Scalar results of one simulation. Times are seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SparfReportSummary {
    pub prefill_s: f64,
    pub decode_s: f64,
    pub decode_per_token_s: f64,
    pub throughput_tok_s: f64,
    pub weight_share: f64,
    pub kv_share: f64,
    pub compute_share: f64,
    pub transfer_share: f64,
    pub kv_access_s: f64,
    pub peak_vram_bytes: f64,
    pub csd_count: usize,
}

/// Opaque scenario handle.
pub struct SparfScenario(Scenario);

/// Opaque simulation result handle.
pub struct SparfReport(ScenarioReport);

/// Opaque device KV layout handle.
pub struct SparfLayout(KvLayout);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SparfStatus {
    match e {
        Error::Config(_) | Error::DimensionMismatch { .. } => SparfStatus::InvalidArgument,
        Error::DegenerateQuery => SparfStatus::Numerical,
        Error::Capacity { .. } => SparfStatus::Capacity,
        Error::Mapping(_) => SparfStatus::Mapping,
        Error::Parse(_) => SparfStatus::Parse,
        Error::Scenario { source, .. } => status_of(source),
        Error::Io(_) | Error::Csv(_) => SparfStatus::Io,
        _ => SparfStatus::Internal,
    }
}

struct Fail(SparfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SparfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SparfStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SparfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SparfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside sparfsim".into());
            SparfStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty if none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn sparfsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sparfsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON scenario file holding exactly one scenario.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_scenario_from_json(json: *const c_char, out: *mut *mut SparfScenario) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(SparfStatus::Parse, "json is not UTF-8".into()))?;
        let mut items = parse_scenarios(text)?;
        if items.len() != 1 {
            return Err(invalid(format!("expected one scenario, got {}", items.len())));
        }
        *out = Box::into_raw(Box::new(SparfScenario(items.remove(0).scenario)));
        Ok(())
    })
}

/// Scenario with the default model and calibration. `ratio` 1 is dense attention.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_scenario_new(
    system: SparfSystem,
    batch: usize,
    input_len: usize,
    output_len: usize,
    ratio: f64,
    csd_count: usize,
    seed: u64,
    out: *mut *mut SparfScenario,
) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kind = match system {
            SparfSystem::Instinfer => SystemKind::Instinfer,
            SparfSystem::HostOffload => SystemKind::HostOffload,
            SparfSystem::SsdOffload => SystemKind::SsdOffload,
        };
        let sparsity = if ratio >= 1.0 { Sparsity::dense() } else { Sparsity::ratio(ratio) };
        let mut s = Scenario::new(
            kind,
            Workload {
                batch,
                input_len,
                output_len,
            },
            sparsity,
        );
        s.hardware.csd_count = csd_count;
        s.hardware.ssd_count = csd_count.max(1);
        s.seed = seed;
        s.validate()?;
        *out = Box::into_raw(Box::new(SparfScenario(s)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from a `sparfsim_scenario_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_scenario_free(scenario: *mut SparfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_simulate(scenario: *const SparfScenario, out: *mut *mut SparfReport) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        *out = Box::into_raw(Box::new(SparfReport(simulate(&s.0)?)));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_report_summary(report: *const SparfReport, out: *mut SparfReportSummary) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let sh = r.breakdown.shares();
        *out = SparfReportSummary {
            prefill_s: r.prefill_s,
            decode_s: r.decode_s,
            decode_per_token_s: r.decode_per_token_s(),
            throughput_tok_s: r.throughput(),
            weight_share: sh[0],
            kv_share: sh[1],
            compute_share: sh[2],
            transfer_share: sh[3],
            kv_access_s: r.breakdown.kv_access,
            peak_vram_bytes: r.peak_vram_bytes,
            csd_count: r.csd_count,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must come from `sparfsim_simulate` or be null.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_report_free(report: *mut SparfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// KV cache bytes of an OPT-style model with `layers` layers and hidden size `hidden`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_kv_cache_bytes(
    layers: usize,
    hidden: usize,
    element_bytes: usize,
    batch: usize,
    seq: usize,
    out: *mut f64,
) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = ModelSpec {
            layers,
            hidden,
            element_bytes,
            ..ModelSpec::opt_13b()
        };
        if layers == 0 || hidden == 0 || element_bytes == 0 {
            return Err(invalid("layers, hidden and element_bytes must be >= 1"));
        }
        *out = kv_cache_bytes(&model, batch, seq);
        Ok(())
    })
}

unsafe fn head(q: *const f64, keys: *const f64, values: *const f64, d: usize, s: usize) -> Result<HeadTensors, Fail> {
    if d == 0 || s == 0 {
        return Err(invalid("head_dim and seq_len must be >= 1"));
    }
    let n = d.checked_mul(s).ok_or_else(|| invalid("head too large"))?;
    let q = slice(q, d, "query")?.to_vec();
    let k = Matrix::from_vec(s, d, slice(keys, n, "keys")?.to_vec())?;
    let v = Matrix::from_vec(s, d, slice(values, n, "values")?.to_vec())?;
    Ok(HeadTensors::new(q, k, v)?)
}

/// Exact attention of one head. `keys` and `values` are row-major `seq_len × head_dim`;
/// `out` receives `head_dim` values.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_dense_attention(
    query: *const f64,
    keys: *const f64,
    values: *const f64,
    head_dim: usize,
    seq_len: usize,
    out: *mut f64,
) -> SparfStatus {
    guard(|| {
        let t = head(query, keys, values, head_dim, seq_len)?;
        let o = dense_attention(&t)?;
        slice_mut(out, head_dim, "out")?.copy_from_slice(&o);
        Ok(())
    })
}

/// SparF attention keeping `kept_embeddings` query components and `kept_tokens` tokens,
/// with page groups of `embedding_group` embeddings and `token_group` tokens.
/// `alpha` may be null.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_sparf_attention(
    query: *const f64,
    keys: *const f64,
    values: *const f64,
    head_dim: usize,
    seq_len: usize,
    kept_embeddings: usize,
    kept_tokens: usize,
    embedding_group: usize,
    token_group: usize,
    out: *mut f64,
    alpha: *mut f64,
) -> SparfStatus {
    guard(|| {
        let t = head(query, keys, values, head_dim, seq_len)?;
        let cfg = HeadConfig {
            head_dim,
            seq_len,
            kept_embeddings,
            kept_tokens,
            embedding_group,
            token_group,
        };
        let r = sparf_attention(&t, &cfg)?;
        slice_mut(out, head_dim, "out")?.copy_from_slice(&r.out);
        if let Some(a) = alpha.as_mut() {
            *a = r.alpha;
        }
        Ok(())
    })
}

/// Empty device layout on the default flash geometry with `channels` channels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_new(
    layers: usize,
    heads: usize,
    head_dim: usize,
    max_context: usize,
    channels: usize,
    out: *mut *mut SparfLayout,
) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let geometry = FlashGeometry {
            channels,
            ..FlashGeometry::default()
        };
        let layout = KvLayout::new(LayoutConfig::new(geometry, layers, heads, head_dim, max_context))?;
        *out = Box::into_raw(Box::new(SparfLayout(layout)));
        Ok(())
    })
}

/// # Safety
/// `layout` must come from `sparfsim_layout_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_free(layout: *mut SparfLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Appends one token's K and V rows (`head_dim` values each).
///
/// # Safety
/// `layout` must be live; `k` and `v` must hold `head_dim` values.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_append(
    layout: *mut SparfLayout,
    layer: usize,
    head: usize,
    k: *const f64,
    v: *const f64,
) -> SparfStatus {
    guard(|| {
        let l = &mut layout.as_mut().ok_or_else(|| null("layout"))?.0;
        let d = l.config().head_dim;
        l.append_token_kv(layer, head, slice(k, d, "k")?, slice(v, d, "v")?)?;
        Ok(())
    })
}

/// Programs pending pages; `finish != 0` also pads and flushes partially filled groups.
///
/// # Safety
/// `layout` must be live.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_sync(layout: *mut SparfLayout, finish: i32) -> SparfStatus {
    guard(|| {
        let l = &mut layout.as_mut().ok_or_else(|| null("layout"))?.0;
        if finish != 0 {
            l.finish()?;
        } else {
            l.sync()?;
        }
        Ok(())
    })
}

/// Physical over logical bytes programmed so far.
///
/// # Safety
/// `layout` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_write_amplification(layout: *const SparfLayout, out: *mut f64) -> SparfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let l = &layout.as_ref().ok_or_else(|| null("layout"))?.0;
        *out = l.stats().write_amplification();
        Ok(())
    })
}

/// Flash pages and device-DRAM hits needed to read the given tokens of one tensor.
///
/// # Safety
/// `layout` must be live, `tokens` must hold `count` strictly increasing indices, and
/// `pages`/`dram_hits` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sparfsim_layout_lookup_tokens(
    layout: *const SparfLayout,
    layer: usize,
    head: usize,
    tensor: SparfTensor,
    tokens: *const usize,
    count: usize,
    pages: *mut usize,
    dram_hits: *mut usize,
) -> SparfStatus {
    guard(|| {
        let pages = out_ptr(pages, "pages")?;
        let hits = out_ptr(dram_hits, "dram_hits")?;
        let l = &layout.as_ref().ok_or_else(|| null("layout"))?.0;
        let sel = if count == 0 {
            Vec::new()
        } else if tokens.is_null() {
            return Err(null("tokens"));
        } else {
            std::slice::from_raw_parts(tokens, count).to_vec()
        };
        let extent = l.token_count(layer, head).max(sel.last().map_or(0, |t| t + 1));
        let mask = SelectionMask::new(Axis::Token, sel, extent)?;
        let tensor = match tensor {
            SparfTensor::K => KvTensor::K,
            SparfTensor::V => KvTensor::V,
        };
        let r = l.lookup_token_pages(layer, head, &mask, tensor)?;
        *pages = r.pages.len();
        *hits = r.dram_hits;
        Ok(())
    })
}
