use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use po2forge::error::Error;

/// Result of every fallible call. Details of the last failure on the calling
/// thread are available from `po2_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum po2_status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Overflow = 5,
    BufferCapacity = 6,
    Infeasible = 7,
    Internal = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|e| {
        let cut = e.nul_position();
        let mut bytes = e.into_vec();
        bytes.truncate(cut);
        CString::new(bytes).expect("truncated at the first NUL")
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

pub(crate) fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

pub(crate) fn last_error_ptr() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Internal failure type: a status plus its message.
pub(crate) struct Failure(pub po2_status, pub String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => po2_status::Io,
            Error::Parse { .. } | Error::Format { .. } | Error::TensorLength { .. } | Error::Shape(_) => {
                po2_status::Format
            }
            Error::InvalidConfig(_) | Error::NotDecomposable(_) | Error::NotNormalized(_) => po2_status::InvalidArgument,
            Error::Overflow(_) => po2_status::Overflow,
            Error::BufferCapacity(_) => po2_status::BufferCapacity,
            Error::Infeasible(_) => po2_status::Infeasible,
            Error::Internal(_) => po2_status::Internal,
        };
        Failure(status, e.to_string())
    }
}

pub(crate) fn null(what: &str) -> Failure {
    Failure(po2_status::NullPointer, format!("`{what}` is NULL"))
}

pub(crate) fn invalid(msg: impl Into<String>) -> Failure {
    Failure(po2_status::InvalidArgument, msg.into())
}

/// Runs `f`, recording the failure message and converting panics so that no
/// unwind crosses the C boundary.
pub(crate) fn guard(f: impl FnOnce() -> Result<(), Failure>) -> po2_status {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => po2_status::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            po2_status::Panic
        }
    }
}
