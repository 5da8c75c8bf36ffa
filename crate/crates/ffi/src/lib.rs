//! C ABI for nifuzz.
//!
//! Handles (`NifuzzInput`, `NifuzzConfig`, `NifuzzCampaign`) are opaque and
//! owned by the caller; each has a matching `*_free`. Fallible functions
//! return a `NifuzzStatus` and leave a message for `nifuzz_last_error` on
//! the calling thread. No function unwinds across the boundary.
//!
//! Callback targets receive a borrowed view of the input and an I/O handle
//! that is only valid for the duration of the call.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use nifuzz::budget::ClockMode;
use nifuzz::campaign::{Campaign, CampaignConfig, TargetSpec};
use nifuzz::estimators::{LeakSummary, QifReport};
use nifuzz::executor::{InProcessBackend, TargetBackend, TargetIo};
use nifuzz::report::read_snapshot;
use nifuzz::{Error, PartSet, SecretPartId, StructuredInput};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NifuzzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Config = 4,
    TargetNotFound = 5,
    Spawn = 6,
    Io = 7,
    ResourceLimit = 8,
    Panic = 9,
    Internal = 10,
}

/// Input parts. Public is not a secret but shares the accessors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NifuzzPart {
    Public = 0,
    Explicit = 1,
    Stack = 2,
    Heap = 3,
}

impl NifuzzPart {
    fn secret(self) -> Option<SecretPartId> {
        match self {
            Self::Public => None,
            Self::Explicit => Some(SecretPartId::Explicit),
            Self::Stack => Some(SecretPartId::Stack),
            Self::Heap => Some(SecretPartId::Heap),
        }
    }
}

/// Presence-mask bits, as in the container format.
pub const NIFUZZ_MASK_EXPLICIT: u8 = 1;
pub const NIFUZZ_MASK_STACK: u8 = 2;
pub const NIFUZZ_MASK_HEAP: u8 = 4;

/// Opaque structured input.
pub struct NifuzzInput {
    inner: StructuredInput,
}

/// Opaque campaign configuration.
pub struct NifuzzConfig {
    config: CampaignConfig,
    callback: Option<Callback>,
}

/// Opaque running campaign.
pub struct NifuzzCampaign {
    campaign: Campaign,
}

/// Output sink handed to callback targets; valid only during the call.
pub struct NifuzzIo {
    io: *mut TargetIo,
}

/// Heap buffer allocated by this library; release with `nifuzz_buffer_free`.
#[repr(C)]
pub struct NifuzzBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// Borrowed bytes of one part. `len` is -1 when the part is absent.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct NifuzzPartView {
    pub data: *const u8,
    pub len: i64,
}

#[repr(C)]
#[derive(Clone, Copy)]
pub struct NifuzzInputView {
    pub public_input: NifuzzPartView,
    pub explicit_secret: NifuzzPartView,
    pub stack_secret: NifuzzPartView,
    pub heap_secret: NifuzzPartView,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NifuzzReport {
    pub cmi_bits: f64,
    pub capacity_lower_bound_bits: f64,
    pub direct_mapped_explicit: u64,
    pub direct_mapped_stack: u64,
    pub direct_mapped_heap: u64,
    pub violations: u64,
    pub unique_public_inputs: u64,
    pub executions: u64,
    pub seconds: f64,
}

impl From<&QifReport> for NifuzzReport {
    fn from(r: &QifReport) -> Self {
        Self {
            cmi_bits: r.cmi_bits,
            capacity_lower_bound_bits: r.capacity_lower_bound_bits,
            direct_mapped_explicit: r.direct_mapped_bits.explicit as u64,
            direct_mapped_stack: r.direct_mapped_bits.stack as u64,
            direct_mapped_heap: r.direct_mapped_bits.heap as u64,
            violations: r.violations as u64,
            unique_public_inputs: r.unique_public_inputs as u64,
            executions: r.executions,
            seconds: r.seconds,
        }
    }
}

/// A target implemented by the caller. Must be deterministic in its input
/// and write its public output through `io`.
pub type NifuzzTargetFn = Option<unsafe extern "C" fn(user_data: *mut c_void, input: *const NifuzzInputView, io: *mut NifuzzIo)>;

#[derive(Clone, Copy)]
struct Callback {
    f: unsafe extern "C" fn(*mut c_void, *const NifuzzInputView, *mut NifuzzIo),
    user_data: *mut c_void,
}

impl Callback {
    /// # Safety
    /// `f` must be a valid target function for `user_data`.
    unsafe fn call(&self, input: &NifuzzInputView, io: &mut NifuzzIo) {
        (self.f)(self.user_data, input, io)
    }
}

// SAFETY: the campaign calls the target from the thread that drives it; the
// caller guarantees `user_data` may be used from that thread.
unsafe impl Send for Callback {}
unsafe impl Sync for Callback {}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> NifuzzStatus {
    match e {
        Error::Format(_) => NifuzzStatus::Format,
        Error::Config(_) | Error::EmptyCorpus => NifuzzStatus::Config,
        Error::TargetNotFound(_) => NifuzzStatus::TargetNotFound,
        Error::Spawn { .. } | Error::SharedMemory(_) => NifuzzStatus::Spawn,
        Error::Io(_) | Error::Json(_) => NifuzzStatus::Io,
        Error::ResourceLimit { .. } => NifuzzStatus::ResourceLimit,
        Error::BitOutOfRange { .. } | Error::MissingPart(_) | Error::ShrinkRequested { .. } => {
            NifuzzStatus::InvalidArgument
        }
        _ => NifuzzStatus::Internal,
    }
}

fn fail(e: Error) -> NifuzzStatus {
    set_error(e.to_string());
    status_of(&e)
}

/// Runs `f`, converting panics into `NifuzzStatus::Panic`.
fn guard(f: impl FnOnce() -> NifuzzStatus) -> NifuzzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            NifuzzStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return NifuzzStatus::NullPointer;
        })+
    };
}

/// # Safety
/// `data` must point to `len` readable bytes, or be null with `len == 0`.
unsafe fn bytes<'a>(data: *const u8, len: usize) -> &'a [u8] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(data, len)
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn c_str(s: *const c_char) -> Option<String> {
    (!s.is_null()).then(|| CStr::from_ptr(s).to_string_lossy().into_owned())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nifuzz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nifuzz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- buffers ----

fn into_buffer(v: Vec<u8>) -> NifuzzBuffer {
    let mut b = v.into_boxed_slice();
    let buf = NifuzzBuffer {
        data: b.as_mut_ptr(),
        len: b.len(),
    };
    std::mem::forget(b);
    buf
}

/// # Safety
/// `buf` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_buffer_free(buf: NifuzzBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

// ---- inputs ----

/// New input with the given public part and no secret parts.
///
/// # Safety
/// `public_data` must point to `public_len` bytes (or be null if zero).
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_new(public_data: *const u8, public_len: usize) -> *mut NifuzzInput {
    if public_data.is_null() && public_len > 0 {
        set_error("`public_data` is null");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(NifuzzInput {
        inner: StructuredInput::new(bytes(public_data, public_len).to_vec()),
    }))
}

/// # Safety
/// `input` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_free(input: *mut NifuzzInput) {
    if !input.is_null() {
        drop(Box::from_raw(input));
    }
}

/// Sets a part's bytes. Stack and heap parts must be non-empty.
///
/// # Safety
/// `input` must be live; `data` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_set_part(
    input: *mut NifuzzInput,
    part: NifuzzPart,
    data: *const u8,
    len: usize,
) -> NifuzzStatus {
    non_null!(input);
    if data.is_null() && len > 0 {
        set_error("`data` is null");
        return NifuzzStatus::NullPointer;
    }
    let v = bytes(data, len).to_vec();
    let input = &mut (*input).inner;
    match part.secret() {
        None => input.public = v,
        Some(p) => {
            if p.is_memory_fill() && v.is_empty() {
                set_error(format!("{p} part must not be empty"));
                return NifuzzStatus::InvalidArgument;
            }
            input.set_part(p, Some(v));
        }
    }
    NifuzzStatus::Ok
}

/// Removes a secret part. The public part cannot be removed.
///
/// # Safety
/// `input` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_clear_part(input: *mut NifuzzInput, part: NifuzzPart) -> NifuzzStatus {
    non_null!(input);
    match part.secret() {
        None => {
            set_error("the public part is always present");
            NifuzzStatus::InvalidArgument
        }
        Some(p) => {
            (*input).inner.set_part(p, None);
            NifuzzStatus::Ok
        }
    }
}

fn part_of(input: &StructuredInput, part: NifuzzPart) -> Option<&[u8]> {
    match part.secret() {
        None => Some(&input.public),
        Some(p) => input.part(p),
    }
}

/// Length of a part in bytes, or -1 if absent or `input` is null.
///
/// # Safety
/// `input` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_part_len(input: *const NifuzzInput, part: NifuzzPart) -> i64 {
    if input.is_null() {
        return -1;
    }
    part_of(&(*input).inner, part).map_or(-1, |b| b.len() as i64)
}

/// Borrowed pointer to a part's bytes, or null if absent. Invalidated by
/// any later mutation or free of `input`.
///
/// # Safety
/// `input` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_part_data(input: *const NifuzzInput, part: NifuzzPart) -> *const u8 {
    if input.is_null() {
        return ptr::null();
    }
    part_of(&(*input).inner, part).map_or(ptr::null(), |b| b.as_ptr())
}

/// Encodes `input` in the container format.
///
/// # Safety
/// `input` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_encode(input: *const NifuzzInput, out: *mut NifuzzBuffer) -> NifuzzStatus {
    non_null!(input, out);
    guard(|| {
        *out = into_buffer((*input).inner.to_container());
        NifuzzStatus::Ok
    })
}

/// Decodes a container. On success `*out` owns a new input.
///
/// # Safety
/// `data` must point to `len` bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_input_decode(data: *const u8, len: usize, out: *mut *mut NifuzzInput) -> NifuzzStatus {
    non_null!(out);
    if data.is_null() && len > 0 {
        set_error("`data` is null");
        return NifuzzStatus::NullPointer;
    }
    guard(|| match StructuredInput::from_container(bytes(data, len)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(NifuzzInput { inner }));
            NifuzzStatus::Ok
        }
        Err(e) => fail(e.into()),
    })
}

// ---- callback I/O ----

/// # Safety
/// `io` must be the handle passed to the running callback.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_io_write_stdout(io: *mut NifuzzIo, data: *const u8, len: usize) {
    if !io.is_null() && (!data.is_null() || len == 0) {
        (*(*io).io).stdout(bytes(data, len));
    }
}

/// # Safety
/// `io` must be the handle passed to the running callback.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_io_write_stderr(io: *mut NifuzzIo, data: *const u8, len: usize) {
    if !io.is_null() && (!data.is_null() || len == 0) {
        (*(*io).io).stderr(bytes(data, len));
    }
}

/// Records a hit on coverage edge `edge` (reduced modulo the map size).
///
/// # Safety
/// `io` must be the handle passed to the running callback.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_io_hit(io: *mut NifuzzIo, edge: u64) {
    if !io.is_null() {
        (*(*io).io).hit(edge);
    }
}

/// Marks the current execution as crashed.
///
/// # Safety
/// `io` must be the handle passed to the running callback.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_io_crash(io: *mut NifuzzIo) {
    if !io.is_null() {
        (*(*io).io).crash();
    }
}

fn view(part: Option<&[u8]>) -> NifuzzPartView {
    match part {
        Some(b) => NifuzzPartView {
            data: b.as_ptr(),
            len: b.len() as i64,
        },
        None => NifuzzPartView {
            data: ptr::null(),
            len: -1,
        },
    }
}

fn callback_backend(cb: Callback, map_size: usize) -> InProcessBackend {
    InProcessBackend::new(
        Arc::new(move |input: &StructuredInput, io: &mut TargetIo| {
            let v = NifuzzInputView {
                public_input: view(Some(&input.public)),
                explicit_secret: view(input.part(SecretPartId::Explicit)),
                stack_secret: view(input.part(SecretPartId::Stack)),
                heap_secret: view(input.part(SecretPartId::Heap)),
            };
            let mut handle = NifuzzIo { io };
            // SAFETY: the caller registered `f` as a valid target function.
            unsafe { cb.call(&v, &mut handle) };
        }),
        map_size,
    )
}

// ---- configuration ----

fn new_config(target: TargetSpec, callback: Option<Callback>) -> *mut NifuzzConfig {
    Box::into_raw(Box::new(NifuzzConfig {
        config: CampaignConfig::new(target, 60.0),
        callback,
    }))
}

/// Configuration for a built-in in-process target. Null if unknown.
///
/// # Safety
/// `name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_new_builtin(name: *const c_char) -> *mut NifuzzConfig {
    let Some(name) = c_str(name) else {
        set_error("`name` is null");
        return ptr::null_mut();
    };
    if nifuzz::targets::lookup(&name).is_none() {
        set_error(format!("unknown built-in target `{name}`"));
        return ptr::null_mut();
    }
    new_config(TargetSpec::Builtin(name), None)
}

/// Configuration for an instrumented executable.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_new_subprocess(path: *const c_char) -> *mut NifuzzConfig {
    let Some(path) = c_str(path) else {
        set_error("`path` is null");
        return ptr::null_mut();
    };
    new_config(TargetSpec::Subprocess(PathBuf::from(path)), None)
}

/// Configuration for a caller-implemented target. `parts_mask` declares the
/// secret parts (`NIFUZZ_MASK_*` bits).
///
/// # Safety
/// `target` must stay callable, and `user_data` valid, for the lifetime of
/// every campaign created from this configuration.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_new_callback(
    target: NifuzzTargetFn,
    user_data: *mut c_void,
    parts_mask: u8,
) -> *mut NifuzzConfig {
    let Some(f) = target else {
        set_error("`target` is null");
        return ptr::null_mut();
    };
    let Some(parts) = PartSet::from_mask(parts_mask).filter(|p| !p.is_empty()) else {
        set_error(format!("invalid parts mask {parts_mask:#04x}"));
        return ptr::null_mut();
    };
    let cfg = new_config(TargetSpec::Custom("callback".into()), Some(Callback { f, user_data }));
    (*cfg).config.parts = Some(parts);
    cfg
}

/// # Safety
/// `config` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_free(config: *mut NifuzzConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Applies `f` to the configuration behind `config`.
///
/// # Safety
/// `config` must be null or live.
unsafe fn with_config(config: *mut NifuzzConfig, f: impl FnOnce(&mut CampaignConfig)) -> NifuzzStatus {
    non_null!(config);
    f(&mut (*config).config);
    NifuzzStatus::Ok
}

/// Time budget in seconds; must be positive.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_budget_secs(config: *mut NifuzzConfig, value: f64) -> NifuzzStatus {
    with_config(config, |c| c.budget_secs = value)
}

/// Stops after this many executions; 0 removes the cap.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_max_executions(config: *mut NifuzzConfig, value: u64) -> NifuzzStatus {
    with_config(config, |c| c.max_executions = (value > 0).then_some(value))
}

/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_rng_seed(config: *mut NifuzzConfig, value: u64) -> NifuzzStatus {
    with_config(config, |c| c.rng_seed = value)
}

/// Non-zero counts one microsecond per execution instead of wall time.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_logical_clock(config: *mut NifuzzConfig, value: u8) -> NifuzzStatus {
    with_config(config, |c| c.clock = if value != 0 { ClockMode::Logical } else { ClockMode::Wall })
}

/// Non-zero draws public inputs uniformly from those already recorded.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_force_uniform_public(config: *mut NifuzzConfig, value: u8) -> NifuzzStatus {
    with_config(config, |c| c.force_uniform_public = value != 0)
}

/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_min_hits(config: *mut NifuzzConfig, value: u64) -> NifuzzStatus {
    with_config(config, |c| c.min_hits = value)
}

/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_map_size(config: *mut NifuzzConfig, value: usize) -> NifuzzStatus {
    with_config(config, |c| c.map_size = value)
}

/// Execution timeout for subprocess targets.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_timeout_secs(config: *mut NifuzzConfig, value: f64) -> NifuzzStatus {
    with_config(config, |c| c.timeout = Duration::try_from_secs_f64(value).unwrap_or_default())
}

/// Declared secret parts as `NIFUZZ_MASK_*` bits.
///
/// # Safety
/// `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_parts(config: *mut NifuzzConfig, value: u8) -> NifuzzStatus {
    with_config(config, |c| c.parts = Some(PartSet::from_mask(value).unwrap_or(PartSet::EMPTY)))
}

/// Directory receiving stats, report, snapshot and witnesses; null clears it.
///
/// # Safety
/// `config` must be live; `dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_out_dir(config: *mut NifuzzConfig, dir: *const c_char) -> NifuzzStatus {
    non_null!(config);
    (*config).config.out_dir = c_str(dir).map(PathBuf::from);
    NifuzzStatus::Ok
}

/// Directory of container-format seed files; null clears it.
///
/// # Safety
/// `config` must be live; `dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_set_seeds_dir(config: *mut NifuzzConfig, dir: *const c_char) -> NifuzzStatus {
    non_null!(config);
    (*config).config.seeds_dir = c_str(dir).map(PathBuf::from);
    NifuzzStatus::Ok
}

/// Adds a copy of `seed` to the initial corpus.
///
/// # Safety
/// `config` and `seed` must be live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_config_add_seed(config: *mut NifuzzConfig, seed: *const NifuzzInput) -> NifuzzStatus {
    non_null!(config, seed);
    (*config).config.seeds.push((*seed).inner.clone());
    NifuzzStatus::Ok
}

// ---- campaigns ----

/// Validates `config` and opens the target. The configuration is copied.
///
/// # Safety
/// `config` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_new(config: *const NifuzzConfig, out: *mut *mut NifuzzCampaign) -> NifuzzStatus {
    non_null!(config, out);
    guard(|| {
        let cfg = &*config;
        let result = match cfg.callback {
            Some(cb) => {
                let backend: Box<dyn TargetBackend> = Box::new(callback_backend(cb, cfg.config.map_size));
                Campaign::with_backend(cfg.config.clone(), backend)
            }
            None => Campaign::new(cfg.config.clone()),
        };
        match result {
            Ok(campaign) => {
                *out = Box::into_raw(Box::new(NifuzzCampaign { campaign }));
                NifuzzStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `campaign` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_free(campaign: *mut NifuzzCampaign) {
    if !campaign.is_null() {
        drop(Box::from_raw(campaign));
    }
}

/// Runs the campaign to completion, writes artifacts if an output
/// directory was set, and stores the final metrics in `*out` (may be null).
///
/// # Safety
/// `campaign` must be live; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_run(campaign: *mut NifuzzCampaign, out: *mut NifuzzReport) -> NifuzzStatus {
    non_null!(campaign);
    guard(|| match (*campaign).campaign.run() {
        Ok(r) => {
            if !out.is_null() {
                *out = NifuzzReport::from(&r);
            }
            NifuzzStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Current metrics of a campaign.
///
/// # Safety
/// `campaign` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_report(campaign: *const NifuzzCampaign, out: *mut NifuzzReport) -> NifuzzStatus {
    non_null!(campaign, out);
    guard(|| {
        *out = NifuzzReport::from(&(*campaign).campaign.report());
        NifuzzStatus::Ok
    })
}

/// Current metrics as a JSON document (QifReport field names).
///
/// # Safety
/// `campaign` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_report_json(campaign: *const NifuzzCampaign, out: *mut NifuzzBuffer) -> NifuzzStatus {
    non_null!(campaign, out);
    guard(|| match serde_json::to_vec(&(*campaign).campaign.report()) {
        Ok(v) => {
            *out = into_buffer(v);
            NifuzzStatus::Ok
        }
        Err(e) => fail(e.into()),
    })
}

/// Executions performed so far.
///
/// # Safety
/// `campaign` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_campaign_executions(campaign: *const NifuzzCampaign) -> u64 {
    if campaign.is_null() {
        0
    } else {
        (*campaign).campaign.executions()
    }
}

/// Recomputes the metrics from a `state_snapshot.json` file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nifuzz_report_from_snapshot(path: *const c_char, min_hits: u64, out: *mut NifuzzReport) -> NifuzzStatus {
    non_null!(path, out);
    guard(|| {
        let path = PathBuf::from(c_str(path).unwrap_or_default());
        match read_snapshot(&path) {
            Ok(s) => {
                let r = QifReport::compute(&LeakSummary::from_snapshot(&s), min_hits.max(1), s.executions, s.seconds);
                *out = NifuzzReport::from(&r);
                NifuzzStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
