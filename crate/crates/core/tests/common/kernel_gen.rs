//! Random promotable kernels and a serial/parallel comparison harness.
//!
//! Generated kernels read `src` and `grid`, write `dst` and some columns of
//! `grid` at row `i` only, and reduce into `s`, `p`, `lo`, `hi` and `cnt`.

use kiln::kerneldsl::*;
use rand::seq::SliceRandom;
use rand::Rng;

pub const REDUCED: [&str; 5] = ["s", "p", "lo", "hi", "cnt"];

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    locals: Vec<String>,
    next_local: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn leaf(&mut self) -> String {
        match self.rng.gen_range(0..7) {
            0 => "src[i]".into(),
            1 => format!("grid[i, {}]", self.rng.gen_range(0..3)),
            2 => "k".into(),
            3 => "f32(i)".into(),
            4 if !self.locals.is_empty() => self.locals.choose(self.rng).unwrap().clone(),
            _ => format!("{:.3}", self.rng.gen_range(-4.0f32..4.0)),
        }
    }

    fn fexpr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.leaf();
        }
        let a = self.fexpr(depth - 1);
        match self.rng.gen_range(0..9) {
            0 => format!("({a} + {})", self.fexpr(depth - 1)),
            1 => format!("({a} - {})", self.fexpr(depth - 1)),
            2 => format!("({a} * {})", self.fexpr(depth - 1)),
            3 => format!("({a} / (1.5 + abs({})))", self.fexpr(depth - 1)),
            4 => format!("sin({a})"),
            5 => format!("cos({a})"),
            6 => format!("sqrt(abs({a}))"),
            7 => format!("min({a}, {})", self.fexpr(depth - 1)),
            _ => format!("-max({a}, {})", self.fexpr(depth - 1)),
        }
    }

    fn cond(&mut self) -> String {
        let ops = ["<", "<=", ">", ">=", "!=", "=="];
        let op = ops.choose(self.rng).unwrap();
        match self.rng.gen_range(0..3) {
            0 => format!("{} {op} {}", self.fexpr(2), self.fexpr(2)),
            1 => format!("i % {} {op} 0", self.rng.gen_range(1..5)),
            _ => format!(
                "{} {op} {} && i > {}",
                self.fexpr(1),
                self.fexpr(1),
                self.rng.gen_range(0..50)
            ),
        }
    }

    fn reduce(&mut self) -> String {
        match self.rng.gen_range(0..5) {
            0 => format!("reduce s sum {};", self.fexpr(3)),
            1 => format!("reduce p product (1.0 + 0.0001 * sin({}));", self.fexpr(2)),
            2 => format!("reduce lo min {};", self.fexpr(3)),
            3 => format!("reduce hi max {};", self.fexpr(3)),
            _ => format!("reduce cnt sum {};", self.rng.gen_range(1..4)),
        }
    }
}

/// Source of a random kernel that satisfies every promotion rule.
pub fn random_promotable_kernel<R: Rng>(rng: &mut R) -> String {
    let mut g = Gen {
        rng,
        locals: Vec::new(),
        next_local: 0,
    };
    let mut body = Vec::new();
    let mut grid_cols: Vec<usize> = vec![0, 1, 2];
    grid_cols.shuffle(g.rng);
    let mut dst_used = false;
    let count = g.rng.gen_range(1..8);
    for _ in 0..count {
        let stmt = match g.rng.gen_range(0..7) {
            0 | 1 => {
                let name = format!("x{}", g.next_local);
                let value = g.fexpr(3);
                g.next_local += 1;
                g.locals.push(name.clone());
                format!("{name} = {value};")
            }
            2 if !dst_used => {
                dst_used = true;
                let op = ["=", "+=", "*="].choose(g.rng).unwrap();
                format!("dst[i] {op} {};", g.fexpr(3))
            }
            3 if !grid_cols.is_empty() => {
                let col = grid_cols.pop().unwrap();
                format!("grid[i, {col}] = {};", g.fexpr(3))
            }
            4 => {
                let cond = g.cond();
                let then = g.reduce();
                let otherwise = g.reduce();
                format!("if {cond} {{ {then} }} else {{ {otherwise} }}")
            }
            5 => {
                let inner = g.fexpr(2);
                format!(
                    "for j in range({}) {{ reduce s sum ({inner}) * f32(j); }}",
                    g.rng.gen_range(0..4)
                )
            }
            _ => g.reduce(),
        };
        body.push(format!("        {stmt}"));
    }
    format!(
        "kernel gen(src: f32[], dst: f32[], grid: f32[,], k: f32, n: i32) {{\n    \
         s = 0.0;\n    p = 1.0;\n    lo = 1000000.0;\n    hi = -1000000.0;\n    cnt = 0;\n    \
         for i in range(n) {{\n{}\n    }}\n}}\n",
        body.join("\n")
    )
}

/// Bindings for the generated kernel signature with `n` rows.
pub fn random_env<R: Rng>(rng: &mut R, n: usize) -> Env {
    let mut vec = |len: usize| -> Vec<f32> { (0..len).map(|_| rng.gen_range(-10.0f32..10.0)).collect() };
    let src = vec(n);
    let dst = vec(n);
    let grid = vec(n * 3);
    Env::new()
        .with("src", Binding::Array1(src))
        .with("dst", Binding::Array1(dst))
        .with(
            "grid",
            Binding::Array2 {
                data: grid,
                rows: n,
                cols: 3,
            },
        )
        .with("k", Binding::F32(rng.gen_range(-2.0f32..2.0)))
        .with("n", Binding::I32(n as i32))
}

pub fn rel_close(a: f32, b: f32, tol: f32) -> bool {
    if a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= tol * scale
}

/// Runs `plan` serially and in parallel on copies of `env` and reports the
/// first disagreement: arrays must match bit for bit, float reductions to
/// 1e-6 relative, integer reductions exactly.
pub fn serial_parallel_mismatch(plan: &ExecutionPlan, env: &Env, workers: usize) -> Option<String> {
    let mut serial_env = env.clone();
    let mut parallel_env = env.clone();
    let serial = execute(
        plan,
        &mut serial_env,
        &ExecOptions {
            force_serial: true,
            ..Default::default()
        },
    );
    let parallel = execute(
        plan,
        &mut parallel_env,
        &ExecOptions {
            workers: Some(workers),
            ..Default::default()
        },
    );
    let (serial, parallel) = match (serial, parallel) {
        (Ok(s), Ok(p)) => (s, p),
        (s, p) => return Some(format!("run failed: serial {s:?}, parallel {p:?}")),
    };
    if parallel.path != ExecPath::Parallel {
        return Some(format!("parallel run took {:?}", parallel.path));
    }
    for (name, binding) in serial_env.bindings() {
        if let Some(s) = binding.as_slice() {
            let p = parallel_env.array(name).unwrap();
            if let Some(at) = (0..s.len()).find(|&k| s[k].to_bits() != p[k].to_bits()) {
                return Some(format!("`{name}`[{at}]: serial {} parallel {}", s[at], p[at]));
            }
        }
    }
    for name in REDUCED {
        match (serial.locals.get(name), parallel.locals.get(name)) {
            (Some(Scalar::F32(a)), Some(Scalar::F32(b))) if rel_close(*a, *b, 1e-6) => {}
            (Some(a), Some(b)) if a == b => {}
            (a, b) => return Some(format!("reduction `{name}`: serial {a:?} parallel {b:?}")),
        }
    }
    None
}

pub const WAVE_PARAMS: [&str; 6] = ["p", "n", "amp", "omega", "speed", "t"];

/// Height of the wave at `(x, z)`, evaluated directly in f32 with the same
/// operation order as the kernel.
pub fn wave_height(amp: f32, omega: f32, speed: f32, t: f32, x: f32, z: f32) -> f32 {
    amp * (omega * x + speed * t).sin() + amp / 2.0 * (omega * z + 1.3 * speed * t).sin()
}
