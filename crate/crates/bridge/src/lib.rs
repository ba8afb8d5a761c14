//! C ABI over [`kiln::soastore::ColumnStore`] for foreign-language clients.
//!
//! Every call takes plain integers, 64-bit handle arrays and caller-owned
//! 32-bit float buffers; nothing allocated here is handed to the caller
//! except the opaque store pointer. Handles are packed as
//! `generation << 32 | index`; the class travels as a separate argument.
//! The matching declarations live in `include/kiln_bridge.h`.
//!
//! Functions return a non-negative value on success and one of the
//! `KILN_E*` codes on failure. Panics never unwind across the boundary.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use kiln::soastore::{ClassId, ClassSchema, ColumnStore, FieldId, FieldSpec, GenerationalHandle, LaneType, StoreError};

pub const KILN_OK: i64 = 0;
pub const KILN_ENULL: i64 = -1;
pub const KILN_EINVAL: i64 = -2;
pub const KILN_EUNKNOWN_CLASS: i64 = -3;
pub const KILN_EUNKNOWN_FIELD: i64 = -4;
pub const KILN_ESTALE: i64 = -5;
pub const KILN_ESHAPE: i64 = -6;
pub const KILN_ETYPE: i64 = -7;
pub const KILN_EDUPLICATE: i64 = -8;
pub const KILN_EPANIC: i64 = -9;

/// Opaque store owned by the foreign caller between `open_store` and
/// `close_store`.
pub struct KilnStore {
    store: ColumnStore,
    /// Batch entry points invoked, whether or not they succeeded.
    crossings: u64,
}

fn code_of(err: &StoreError) -> i64 {
    match err {
        StoreError::DuplicateClass(_) | StoreError::DuplicateField { .. } => KILN_EDUPLICATE,
        StoreError::InvalidComponentCount { .. } => KILN_EINVAL,
        StoreError::UnknownClass(_) => KILN_EUNKNOWN_CLASS,
        StoreError::StaleHandle(_) => KILN_ESTALE,
        StoreError::UnknownField { .. } => KILN_EUNKNOWN_FIELD,
        StoreError::MixedClass { .. } | StoreError::ShapeMismatch { .. } => KILN_ESHAPE,
        StoreError::TypeMismatch { .. } => KILN_ETYPE,
    }
}

/// Runs `body`, mapping errors and panics to codes.
fn guard(body: impl FnOnce() -> Result<i64, i64>) -> i64 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(v)) => v,
        Ok(Err(code)) => code,
        Err(_) => KILN_EPANIC,
    }
}

/// Borrows `len` items at `ptr`; a null pointer is fine when `len` is 0.
unsafe fn view<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], i64> {
    match (ptr.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(KILN_ENULL),
        (false, _) => Ok(slice::from_raw_parts(ptr, len)),
    }
}

unsafe fn view_mut<'a, T>(ptr: *mut T, len: usize) -> Result<&'a mut [T], i64> {
    match (ptr.is_null(), len) {
        (_, 0) => Ok(&mut []),
        (true, _) => Err(KILN_ENULL),
        (false, _) => Ok(slice::from_raw_parts_mut(ptr, len)),
    }
}

unsafe fn store_mut<'a>(store: *mut KilnStore) -> Result<&'a mut KilnStore, i64> {
    store.as_mut().ok_or(KILN_ENULL)
}

fn handles_of(class: u32, packed: &[u64]) -> Vec<GenerationalHandle> {
    packed
        .iter()
        .map(|&h| GenerationalHandle::unpack(ClassId(class), h))
        .collect()
}

/// Components of `field`, validating class and column.
fn width(store: &ColumnStore, field: FieldId) -> Result<usize, i64> {
    store
        .field_spec(field)
        .map(|f| f.components as usize)
        .map_err(|e| code_of(&e))
}

/// Creates an empty store. Never returns null.
#[no_mangle]
pub extern "C" fn open_store() -> *mut KilnStore {
    Box::into_raw(Box::new(KilnStore {
        store: ColumnStore::new(),
        crossings: 0,
    }))
}

/// Frees a store from `open_store`. Null is ignored.
///
/// # Safety
/// `store` must come from `open_store` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn close_store(store: *mut KilnStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Registers a class whose field `i` has lane `lane_codes[i]` (see
/// `LaneType::from_code`) and `components[i]` components. Returns the new
/// class id.
///
/// # Safety
/// Both arrays must hold `field_count` readable items.
#[no_mangle]
pub unsafe extern "C" fn register_class(
    store: *mut KilnStore,
    lane_codes: *const u32,
    components: *const u8,
    field_count: usize,
) -> i64 {
    guard(|| {
        let s = store_mut(store)?;
        let lanes = view(lane_codes, field_count)?;
        let comps = view(components, field_count)?;
        let fields = lanes
            .iter()
            .zip(comps)
            .enumerate()
            .map(|(i, (&code, &k))| {
                let lane = LaneType::from_code(code).ok_or(KILN_EINVAL)?;
                Ok(FieldSpec::new(format!("f{i}"), lane, k))
            })
            .collect::<Result<Vec<_>, i64>>()?;
        let name = format!("class{}", s.store.class_count());
        let class = s
            .store
            .register_class(ClassSchema::new(name, fields))
            .map_err(|e| code_of(&e))?;
        Ok(i64::from(class.0))
    })
}

/// Creates `count` entities and writes their packed handles to
/// `out_handles`. Returns `count`.
///
/// # Safety
/// `out_handles` must have room for `count` items.
#[no_mangle]
pub unsafe extern "C" fn create_handles(store: *mut KilnStore, class: u32, count: usize, out_handles: *mut u64) -> i64 {
    guard(|| {
        let s = store_mut(store)?;
        let out = view_mut(out_handles, count)?;
        let created = s.store.create_many(ClassId(class), count).map_err(|e| code_of(&e))?;
        for (slot, h) in out.iter_mut().zip(created) {
            *slot = h.pack();
        }
        i64::try_from(count).map_err(|_| KILN_EINVAL)
    })
}

/// Destroys every handle, or none of them if any is stale or repeated.
/// Returns `count`.
///
/// # Safety
/// `handles` must hold `count` readable items.
#[no_mangle]
pub unsafe extern "C" fn destroy_handles(store: *mut KilnStore, class: u32, handles: *const u64, count: usize) -> i64 {
    guard(|| {
        let s = store_mut(store)?;
        s.store.live_count(ClassId(class)).map_err(|e| code_of(&e))?;
        let handles = handles_of(class, view(handles, count)?);
        let mut seen = HashSet::with_capacity(count);
        if !handles.iter().all(|&h| s.store.is_live(h) && seen.insert(h)) {
            return Err(KILN_ESTALE);
        }
        for h in handles {
            s.store.destroy(h).map_err(|e| code_of(&e))?;
        }
        i64::try_from(count).map_err(|_| KILN_EINVAL)
    })
}

/// Gathers `field` of every handle into `out` as `count * k` row-major
/// floats, where `k` is the field's component count. Stale rows are zeroed
/// and get 0 in `live_mask` (which may be null). Returns the live row count.
///
/// # Safety
/// `handles` must hold `count` items, `out` room for `out_len` floats and
/// `live_mask`, when non-null, room for `count` bytes.
#[no_mangle]
pub unsafe extern "C" fn batch_read(
    store: *mut KilnStore,
    class: u32,
    field: u32,
    handles: *const u64,
    count: usize,
    out: *mut f32,
    out_len: usize,
    live_mask: *mut u8,
) -> i64 {
    guard(|| {
        let s = store_mut(store)?;
        s.crossings += 1;
        let field = FieldId {
            class: ClassId(class),
            column: field,
        };
        let k = width(&s.store, field)?;
        if out_len != count * k {
            return Err(KILN_ESHAPE);
        }
        let handles = handles_of(class, view(handles, count)?);
        let out = view_mut(out, out_len)?;
        let mut mask = vec![false; count];
        let live = s
            .store
            .batch_read_into(field, &handles, out, &mut mask)
            .map_err(|e| code_of(&e))?;
        if !live_mask.is_null() {
            for (dst, &m) in view_mut(live_mask, count)?.iter_mut().zip(&mask) {
                *dst = u8::from(m);
            }
        }
        Ok(live as i64)
    })
}

/// Scatters `count * k` row-major floats into `field`; stale handles are
/// skipped. Returns the number of rows written.
///
/// # Safety
/// `handles` must hold `count` items and `values` `values_len` floats.
#[no_mangle]
pub unsafe extern "C" fn batch_write(
    store: *mut KilnStore,
    class: u32,
    field: u32,
    handles: *const u64,
    count: usize,
    values: *const f32,
    values_len: usize,
) -> i64 {
    guard(|| {
        let s = store_mut(store)?;
        s.crossings += 1;
        let field = FieldId {
            class: ClassId(class),
            column: field,
        };
        let k = width(&s.store, field)?;
        if values_len != count * k {
            return Err(KILN_ESHAPE);
        }
        let handles = handles_of(class, view(handles, count)?);
        let values = view(values, values_len)?;
        let written = s
            .store
            .batch_write_from(field, &handles, values)
            .map_err(|e| code_of(&e))?;
        Ok(written as i64)
    })
}

/// Batch calls made on `store` so far; 0 for null.
///
/// # Safety
/// `store` must be null or a live pointer from `open_store`.
#[no_mangle]
pub unsafe extern "C" fn crossing_count(store: *const KilnStore) -> u64 {
    store.as_ref().map_or(0, |s| s.crossings)
}
