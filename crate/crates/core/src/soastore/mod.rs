//! Structure-of-arrays store addressed by generational handles.
//!
//! Each registered class owns one column per field. Batch gather and
//! scatter touch a single column in one pass and return or accept 32-bit
//! float rows; scalar access keeps the lane's native width. Every data
//! entry point (batch or scalar) bumps the crossing counter by one.

mod handle;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use handle::{ClassId, GenerationalHandle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneType {
    F32,
    F64,
    I32,
    I64,
    Bool,
    Packed4F32,
}

impl LaneType {
    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Self::F32,
            1 => Self::F64,
            2 => Self::I32,
            3 => Self::I64,
            4 => Self::Bool,
            5 => Self::Packed4F32,
            _ => return None,
        })
    }
}

impl fmt::Display for LaneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub lane: LaneType,
    /// Components per row; above 1 only on the packed lane.
    pub components: u8,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, lane: LaneType, components: u8) -> Self {
        Self {
            name: name.into(),
            lane,
            components,
        }
    }

    pub fn scalar(name: impl Into<String>, lane: LaneType) -> Self {
        Self::new(name, lane, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSchema {
    pub name: String,
    pub fields: Vec<FieldSpec>,
}

impl ClassSchema {
    pub fn new(name: impl Into<String>, fields: Vec<FieldSpec>) -> Self {
        Self {
            name: name.into(),
            fields,
        }
    }
}

/// Pre-resolved field of one class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldId {
    pub class: ClassId,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("class `{0}` already registered")]
    DuplicateClass(String),
    #[error("class `{class}` declares field `{field}` twice")]
    DuplicateField { class: String, field: String },
    #[error("field `{field}` on lane {lane} cannot have {components} components")]
    InvalidComponentCount {
        field: String,
        lane: LaneType,
        components: u8,
    },
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("handle {0} is stale")]
    StaleHandle(GenerationalHandle),
    #[error("class {class} has no field `{field}`")]
    UnknownField { class: ClassId, field: String },
    #[error("handle of class {found} in a batch for class {expected}")]
    MixedClass { expected: ClassId, found: ClassId },
    #[error("batch shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("value of lane {found} written to field `{field}` of lane {expected}")]
    TypeMismatch {
        field: String,
        expected: LaneType,
        found: LaneType,
    },
}

/// Native-width value of one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    F32(f32),
    F64(f64),
    I32(i32),
    I64(i64),
    Bool(bool),
    Packed([f32; 4]),
}

impl Value {
    pub fn lane(&self) -> LaneType {
        match self {
            Value::F32(_) => LaneType::F32,
            Value::F64(_) => LaneType::F64,
            Value::I32(_) => LaneType::I32,
            Value::I64(_) => LaneType::I64,
            Value::Bool(_) => LaneType::Bool,
            Value::Packed(_) => LaneType::Packed4F32,
        }
    }

    /// The row a batch gather would produce for this value.
    pub fn to_f32_row(&self, components: usize) -> Vec<f32> {
        match *self {
            Value::F32(v) => vec![v],
            Value::F64(v) => vec![v as f32],
            Value::I32(v) => vec![v as f32],
            Value::I64(v) => vec![v as f32],
            Value::Bool(v) => vec![if v { 1.0 } else { 0.0 }],
            Value::Packed(v) => v[..components].to_vec(),
        }
    }
}

/// Dense (rows, cols) float buffer with a per-row validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchArray {
    pub data: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
}

impl BatchArray {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
            mask: vec![false; rows],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>], cols: usize) -> Self {
        let mut out = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(r);
            out.mask[i] = true;
        }
        out
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Clone, Debug)]
enum Column {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
    Packed(Vec<[f32; 4]>),
}

impl Column {
    fn new(lane: LaneType) -> Self {
        match lane {
            LaneType::F32 => Column::F32(Vec::new()),
            LaneType::F64 => Column::F64(Vec::new()),
            LaneType::I32 => Column::I32(Vec::new()),
            LaneType::I64 => Column::I64(Vec::new()),
            LaneType::Bool => Column::Bool(Vec::new()),
            LaneType::Packed4F32 => Column::Packed(Vec::new()),
        }
    }

    fn push_zero(&mut self) {
        match self {
            Column::F32(v) => v.push(0.0),
            Column::F64(v) => v.push(0.0),
            Column::I32(v) => v.push(0),
            Column::I64(v) => v.push(0),
            Column::Bool(v) => v.push(false),
            Column::Packed(v) => v.push([0.0; 4]),
        }
    }

    fn zero(&mut self, slot: usize) {
        match self {
            Column::F32(v) => v[slot] = 0.0,
            Column::F64(v) => v[slot] = 0.0,
            Column::I32(v) => v[slot] = 0,
            Column::I64(v) => v[slot] = 0,
            Column::Bool(v) => v[slot] = false,
            Column::Packed(v) => v[slot] = [0.0; 4],
        }
    }

    fn get(&self, slot: usize) -> Value {
        match self {
            Column::F32(v) => Value::F32(v[slot]),
            Column::F64(v) => Value::F64(v[slot]),
            Column::I32(v) => Value::I32(v[slot]),
            Column::I64(v) => Value::I64(v[slot]),
            Column::Bool(v) => Value::Bool(v[slot]),
            Column::Packed(v) => Value::Packed(v[slot]),
        }
    }

    /// Returns false when `value` is of another lane.
    fn set(&mut self, slot: usize, value: Value) -> bool {
        match (self, value) {
            (Column::F32(v), Value::F32(x)) => v[slot] = x,
            (Column::F64(v), Value::F64(x)) => v[slot] = x,
            (Column::I32(v), Value::I32(x)) => v[slot] = x,
            (Column::I64(v), Value::I64(x)) => v[slot] = x,
            (Column::Bool(v), Value::Bool(x)) => v[slot] = x,
            (Column::Packed(v), Value::Packed(x)) => v[slot] = x,
            _ => return false,
        }
        true
    }

    /// Gathers one row per handle with a single lane dispatch; stale rows
    /// are zero-filled. Returns the number of live rows.
    fn gather(
        &self,
        stamps: &[u64],
        handles: &[GenerationalHandle],
        k: usize,
        out: &mut [f32],
        mask: &mut [bool],
    ) -> usize {
        fn lane<T: Copy>(
            col: &[T],
            stamps: &[u64],
            handles: &[GenerationalHandle],
            out: &mut [f32],
            mask: &mut [bool],
            f: impl Fn(T) -> f32,
        ) -> usize {
            let mut live = 0;
            for ((o, m), h) in out.iter_mut().zip(mask.iter_mut()).zip(handles) {
                let ok = stamps.get(h.index as usize) == Some(&live_stamp(h.generation));
                *o = if ok { f(col[h.index as usize]) } else { 0.0 };
                *m = ok;
                live += usize::from(ok);
            }
            live
        }
        match self {
            Column::F32(v) => lane(v, stamps, handles, out, mask, |x| x),
            Column::F64(v) => lane(v, stamps, handles, out, mask, |x| x as f32),
            Column::I32(v) => lane(v, stamps, handles, out, mask, |x| x as f32),
            Column::I64(v) => lane(v, stamps, handles, out, mask, |x| x as f32),
            Column::Bool(v) => lane(v, stamps, handles, out, mask, |x| if x { 1.0 } else { 0.0 }),
            Column::Packed(v) => {
                let mut live = 0;
                for ((row, m), h) in out.chunks_exact_mut(k).zip(mask.iter_mut()).zip(handles) {
                    let ok = stamps.get(h.index as usize) == Some(&live_stamp(h.generation));
                    if ok {
                        row.copy_from_slice(&v[h.index as usize][..k]);
                    } else {
                        row.fill(0.0);
                    }
                    *m = ok;
                    live += usize::from(ok);
                }
                live
            }
        }
    }

    /// Scatters one row per handle, skipping stale ones. Returns rows written.
    fn scatter(&mut self, stamps: &[u64], handles: &[GenerationalHandle], k: usize, data: &[f32]) -> usize {
        fn lane<T>(
            col: &mut [T],
            stamps: &[u64],
            handles: &[GenerationalHandle],
            data: &[f32],
            f: impl Fn(f32) -> T,
        ) -> usize {
            let mut written = 0;
            for (&x, h) in data.iter().zip(handles) {
                if stamps.get(h.index as usize) == Some(&live_stamp(h.generation)) {
                    col[h.index as usize] = f(x);
                    written += 1;
                }
            }
            written
        }
        match self {
            Column::F32(v) => lane(v, stamps, handles, data, |x| x),
            Column::F64(v) => lane(v, stamps, handles, data, f64::from),
            Column::I32(v) => lane(v, stamps, handles, data, |x| x as i32),
            Column::I64(v) => lane(v, stamps, handles, data, |x| x as i64),
            Column::Bool(v) => lane(v, stamps, handles, data, |x| x != 0.0),
            Column::Packed(v) => {
                let mut written = 0;
                for (row, h) in data.chunks_exact(k).zip(handles) {
                    if stamps.get(h.index as usize) == Some(&live_stamp(h.generation)) {
                        v[h.index as usize][..k].copy_from_slice(row);
                        written += 1;
                    }
                }
                written
            }
        }
    }
}

/// Slot stamp: generation in the high bits, liveness in bit 0.
#[inline]
fn live_stamp(generation: u32) -> u64 {
    (u64::from(generation) << 1) | 1
}

#[derive(Clone, Debug)]
struct ClassStore {
    schema: ClassSchema,
    field_index: HashMap<String, u32>,
    columns: Vec<Column>,
    stamps: Vec<u64>,
    free: BTreeSet<u32>,
    live_count: usize,
}

impl ClassStore {
    #[inline]
    fn is_live(&self, index: u32, generation: u32) -> bool {
        self.stamps.get(index as usize) == Some(&live_stamp(generation))
    }

    fn generation(&self, index: usize) -> u32 {
        (self.stamps[index] >> 1) as u32
    }
}

/// Column store over every registered class.
#[derive(Debug, Default)]
pub struct ColumnStore {
    classes: Vec<ClassStore>,
    class_names: HashMap<String, ClassId>,
    crossings: AtomicU64,
}

impl ColumnStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a class and builds its field-name index.
    pub fn register_class(&mut self, schema: ClassSchema) -> Result<ClassId, StoreError> {
        if self.class_names.contains_key(&schema.name) {
            return Err(StoreError::DuplicateClass(schema.name));
        }
        let mut field_index = HashMap::with_capacity(schema.fields.len());
        for (col, f) in schema.fields.iter().enumerate() {
            let k_ok = match f.lane {
                LaneType::Packed4F32 => (1..=4).contains(&f.components),
                _ => f.components == 1,
            };
            if !k_ok {
                return Err(StoreError::InvalidComponentCount {
                    field: f.name.clone(),
                    lane: f.lane,
                    components: f.components,
                });
            }
            if field_index.insert(f.name.clone(), col as u32).is_some() {
                return Err(StoreError::DuplicateField {
                    class: schema.name.clone(),
                    field: f.name.clone(),
                });
            }
        }
        let id = ClassId(self.classes.len() as u32);
        let columns = schema.fields.iter().map(|f| Column::new(f.lane)).collect();
        self.class_names.insert(schema.name.clone(), id);
        self.classes.push(ClassStore {
            schema,
            field_index,
            columns,
            stamps: Vec::new(),
            free: BTreeSet::new(),
            live_count: 0,
        });
        Ok(id)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_names.get(name).copied()
    }

    pub fn schema(&self, class: ClassId) -> Result<&ClassSchema, StoreError> {
        self.class(class).map(|c| &c.schema)
    }

    /// Resolves a field name once, for callers that reuse the token.
    pub fn field_id(&self, class: ClassId, name: &str) -> Result<FieldId, StoreError> {
        let c = self.class(class)?;
        c.field_index
            .get(name)
            .map(|&column| FieldId { class, column })
            .ok_or_else(|| StoreError::UnknownField {
                class,
                field: name.to_owned(),
            })
    }

    pub fn field_spec(&self, field: FieldId) -> Result<&FieldSpec, StoreError> {
        let c = self.class(field.class)?;
        c.schema
            .fields
            .get(field.column as usize)
            .ok_or_else(|| StoreError::UnknownField {
                class: field.class,
                field: format!("#{}", field.column),
            })
    }

    /// Creates an entity in the lowest free slot, zeroing every column.
    pub fn create(&mut self, class: ClassId) -> Result<GenerationalHandle, StoreError> {
        let c = self.class_mut(class)?;
        let index = match c.free.pop_first() {
            Some(i) => {
                for col in &mut c.columns {
                    col.zero(i as usize);
                }
                i
            }
            None => {
                for col in &mut c.columns {
                    col.push_zero();
                }
                c.stamps.push(0);
                (c.stamps.len() - 1) as u32
            }
        };
        let i = index as usize;
        c.stamps[i] |= 1;
        c.live_count += 1;
        Ok(GenerationalHandle {
            class,
            index,
            generation: c.generation(i),
        })
    }

    pub fn create_many(&mut self, class: ClassId, count: usize) -> Result<Vec<GenerationalHandle>, StoreError> {
        (0..count).map(|_| self.create(class)).collect()
    }

    /// Frees the handle's slot and bumps its generation.
    pub fn destroy(&mut self, handle: GenerationalHandle) -> Result<(), StoreError> {
        let c = self.class_mut(handle.class)?;
        if !c.is_live(handle.index, handle.generation) {
            return Err(StoreError::StaleHandle(handle));
        }
        let i = handle.index as usize;
        c.stamps[i] = u64::from(handle.generation.wrapping_add(1)) << 1;
        c.free.insert(handle.index);
        c.live_count -= 1;
        Ok(())
    }

    pub fn is_live(&self, handle: GenerationalHandle) -> bool {
        self.class(handle.class)
            .map(|c| c.is_live(handle.index, handle.generation))
            .unwrap_or(false)
    }

    pub fn live_count(&self, class: ClassId) -> Result<usize, StoreError> {
        self.class(class).map(|c| c.live_count)
    }

    /// Gathers one field for every handle into (N, k) floats.
    pub fn batch_read(
        &self,
        class: ClassId,
        handles: &[GenerationalHandle],
        field: &str,
    ) -> Result<BatchArray, StoreError> {
        let field = self.field_id(class, field)?;
        let k = self.field_spec(field)?.components as usize;
        let mut out = BatchArray::zeros(handles.len(), k);
        self.batch_read_into(field, handles, &mut out.data, &mut out.mask)?;
        Ok(out)
    }

    /// Gather into caller buffers. Stale rows are zeroed and unmasked.
    /// Returns the number of live rows.
    pub fn batch_read_into(
        &self,
        field: FieldId,
        handles: &[GenerationalHandle],
        out: &mut [f32],
        mask: &mut [bool],
    ) -> Result<usize, StoreError> {
        self.crossings.fetch_add(1, Ordering::Relaxed);
        let (c, col, k) = self.resolve(field)?;
        check_shape((handles.len(), k), out.len(), mask.len())?;
        check_class(field.class, handles)?;
        let live = col.gather(&c.stamps, handles, k, out, mask);
        Ok(live)
    }

    /// Scatters (N, k) rows into one field; stale handles are skipped.
    pub fn batch_write(
        &mut self,
        class: ClassId,
        handles: &[GenerationalHandle],
        field: &str,
        data: &BatchArray,
    ) -> Result<usize, StoreError> {
        let field = self.field_id(class, field)?;
        let k = self.field_spec(field)?.components as usize;
        if (data.rows, data.cols) != (handles.len(), k) || data.data.len() != data.rows * data.cols {
            self.crossings.fetch_add(1, Ordering::Relaxed);
            return Err(StoreError::ShapeMismatch {
                expected: (handles.len(), k),
                found: (data.rows, data.cols),
            });
        }
        self.batch_write_from(field, handles, &data.data)
    }

    /// Scatter from a flat row-major buffer. Returns rows written.
    pub fn batch_write_from(
        &mut self,
        field: FieldId,
        handles: &[GenerationalHandle],
        data: &[f32],
    ) -> Result<usize, StoreError> {
        self.crossings.fetch_add(1, Ordering::Relaxed);
        let k = self.resolve(field)?.2;
        let expected = handles.len() * k;
        if data.len() != expected {
            return Err(StoreError::ShapeMismatch {
                expected: (handles.len(), k),
                found: (data.len() / k.max(1), k),
            });
        }
        check_class(field.class, handles)?;
        let c = &mut self.classes[field.class.0 as usize];
        let (columns, stamps) = (&mut c.columns, &c.stamps);
        let written = columns[field.column as usize].scatter(stamps, handles, k, data);
        Ok(written)
    }

    pub fn get_scalar(&self, handle: GenerationalHandle, field: &str) -> Result<Value, StoreError> {
        self.crossings.fetch_add(1, Ordering::Relaxed);
        let c = self.class(handle.class)?;
        let column = *c.field_index.get(field).ok_or_else(|| StoreError::UnknownField {
            class: handle.class,
            field: field.to_owned(),
        })?;
        if !c.is_live(handle.index, handle.generation) {
            return Err(StoreError::StaleHandle(handle));
        }
        Ok(c.columns[column as usize].get(handle.index as usize))
    }

    pub fn set_scalar(&mut self, handle: GenerationalHandle, field: &str, value: Value) -> Result<(), StoreError> {
        self.crossings.fetch_add(1, Ordering::Relaxed);
        let c = self.class_mut(handle.class)?;
        let column = *c.field_index.get(field).ok_or_else(|| StoreError::UnknownField {
            class: handle.class,
            field: field.to_owned(),
        })?;
        if !c.is_live(handle.index, handle.generation) {
            return Err(StoreError::StaleHandle(handle));
        }
        if !c.columns[column as usize].set(handle.index as usize, value) {
            let spec = &c.schema.fields[column as usize];
            return Err(StoreError::TypeMismatch {
                field: spec.name.clone(),
                expected: spec.lane,
                found: value.lane(),
            });
        }
        Ok(())
    }

    /// Number of data entry calls made so far.
    pub fn crossing_count(&self) -> u64 {
        self.crossings.load(Ordering::Relaxed)
    }

    pub fn reset_crossings(&self) {
        self.crossings.store(0, Ordering::Relaxed);
    }

    fn class(&self, class: ClassId) -> Result<&ClassStore, StoreError> {
        self.classes
            .get(class.0 as usize)
            .ok_or(StoreError::UnknownClass(class))
    }

    fn class_mut(&mut self, class: ClassId) -> Result<&mut ClassStore, StoreError> {
        self.classes
            .get_mut(class.0 as usize)
            .ok_or(StoreError::UnknownClass(class))
    }

    fn resolve(&self, field: FieldId) -> Result<(&ClassStore, &Column, usize), StoreError> {
        let c = self.class(field.class)?;
        let col = c
            .columns
            .get(field.column as usize)
            .ok_or_else(|| StoreError::UnknownField {
                class: field.class,
                field: format!("#{}", field.column),
            })?;
        Ok((c, col, c.schema.fields[field.column as usize].components as usize))
    }
}

fn check_shape(expected: (usize, usize), data_len: usize, mask_len: usize) -> Result<(), StoreError> {
    let (rows, k) = expected;
    if data_len != rows * k || mask_len != rows {
        return Err(StoreError::ShapeMismatch {
            expected,
            found: (mask_len, data_len / rows.max(1)),
        });
    }
    Ok(())
}

fn check_class(class: ClassId, handles: &[GenerationalHandle]) -> Result<(), StoreError> {
    match handles.iter().find(|h| h.class != class) {
        Some(h) => Err(StoreError::MixedClass {
            expected: class,
            found: h.class,
        }),
        None => Ok(()),
    }
}
