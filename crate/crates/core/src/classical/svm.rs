//! RBF-kernel support vector machine trained with simplified SMO.
//!
//! Multiclass prediction is one-vs-one: with `C` classes there are
//! `C(C-1)/2` binary machines, each voting for one class of its pair.
//! Vote ties go to the class with the largest summed decision margin.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model_file::{ModelFile, ParamBlock};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Consecutive sweeps without any dual update before stopping.
    pub max_passes: usize,
    /// Hard cap on sweeps, as a guard against slow convergence.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl SvmConfig {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvmConfig {
            c,
            gamma,
            tol: 1e-3,
            max_passes: 20,
            max_sweeps: 100_000,
            seed: 0,
        }
    }
}

/// Smallest dual step that counts as progress.
const MIN_STEP: f64 = 1e-5;

/// Solution of one binary problem: duals, bias and the final error cache.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    /// `f(x_i) - y_i` at convergence.
    pub errors: Vec<f64>,
    pub sweeps: usize,
}

/// Rounding can leave duals a few ulps away from a bound; those would
/// look free forever while being too close to move.
fn snap(a: f64, c: f64) -> f64 {
    let eps = 1e-12 * c;
    if a < eps {
        0.0
    } else if a > c - eps {
        c
    } else {
        a
    }
}

struct Smo<'a> {
    kernel: &'a [f64],
    y: &'a [f64],
    n: usize,
    c: f64,
    alpha: Vec<f64>,
    b: f64,
    err: Vec<f64>,
}

impl Smo<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    fn violates(&self, i: usize, tol: f64) -> bool {
        let r = self.y[i] * self.err[i];
        (r < -tol && self.alpha[i] < self.c) || (r > tol && self.alpha[i] > 0.0)
    }

    /// Joint update of duals `i` and `j`; false if the pair cannot move.
    fn step(&mut self, i: usize, j: usize) -> bool {
        let (y, c) = (self.y, self.c);
        let (ei, ej) = (self.err[i], self.err[j]);
        let (ai_old, aj_old) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            ((aj_old - ai_old).max(0.0), (c + aj_old - ai_old).min(c))
        } else {
            ((ai_old + aj_old - c).max(0.0), (ai_old + aj_old).min(c))
        };
        if lo >= hi {
            return false;
        }
        let (kii, kij, kjj) = (self.k(i, i), self.k(i, j), self.k(j, j));
        let eta = 2.0 * kij - kii - kjj;
        if eta >= 0.0 {
            return false;
        }
        let aj = (aj_old - y[j] * (ei - ej) / eta).clamp(lo, hi);
        if (aj - aj_old).abs() < MIN_STEP {
            return false;
        }
        let ai = snap((ai_old + y[i] * y[j] * (aj_old - aj)).clamp(0.0, c), c);
        let aj = snap(aj, c);
        let (di, dj) = (ai - ai_old, aj - aj_old);
        let b1 = self.b - ei - y[i] * di * kii - y[j] * dj * kij;
        let b2 = self.b - ej - y[i] * di * kij - y[j] * dj * kjj;
        let b_new = if ai > 0.0 && ai < c {
            b1
        } else if aj > 0.0 && aj < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let db = b_new - self.b;
        self.b = b_new;
        let (si, sj) = (y[i] * di, y[j] * dj);
        let n = self.n;
        let (row_i, row_j) = (
            &self.kernel[i * n..(i + 1) * n],
            &self.kernel[j * n..(j + 1) * n],
        );
        for (e, (ki, kj)) in self.err.iter_mut().zip(row_i.iter().zip(row_j)) {
            *e += si * ki + sj * kj + db;
        }
        true
    }

    /// Re-centres the bias on the free duals, if there are any.
    fn settle_bias(&mut self) {
        let free: Vec<f64> = (0..self.n)
            .filter(|i| self.alpha[*i] > 0.0 && self.alpha[*i] < self.c)
            .map(|i| self.err[i])
            .collect();
        if free.is_empty() {
            return;
        }
        let shift = free.iter().sum::<f64>() / free.len() as f64;
        self.b -= shift;
        self.err.iter_mut().for_each(|e| *e -= shift);
    }
}

/// Simplified SMO on a precomputed kernel matrix (row-major `n x n`) with
/// labels in `{-1, +1}`.
///
/// The partner of each KKT-violating dual is drawn at random; when that
/// pair cannot move, the other partners are tried from a random start.
pub fn smo_binary(
    kernel: &[f64],
    y: &[f64],
    c: f64,
    tol: f64,
    max_passes: usize,
    max_sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> BinarySolution {
    let n = y.len();
    debug_assert_eq!(kernel.len(), n * n);
    let mut s = Smo {
        kernel,
        y,
        n,
        c,
        alpha: vec![0.0; n],
        b: 0.0,
        err: y.iter().map(|v| -v).collect(),
    };
    let mut passes = 0;
    let mut sweeps = 0;
    while n >= 2 && passes < max_passes && sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            if !s.violates(i, tol) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if s.step(i, j) {
                changed += 1;
                continue;
            }
            let start = rng.random_range(0..n);
            for off in 0..n {
                let j = (start + off) % n;
                if j != i && s.step(i, j) {
                    changed += 1;
                    break;
                }
            }
        }
        passes = if changed == 0 { passes + 1 } else { 0 };
    }
    if sweeps >= max_sweeps {
        log::warn!("SMO stopped after {sweeps} sweeps without converging");
    }
    s.settle_bias();
    BinarySolution {
        alpha: s.alpha,
        b: s.b,
        errors: s.err,
        sweeps,
    }
}

/// Largest KKT violation `max(0, -y f + 1)` over free-to-grow duals and
/// `max(0, y f - 1)` over positive duals.
pub fn kkt_violation(sol: &BinarySolution, y: &[f64], c: f64) -> f64 {
    sol.alpha
        .iter()
        .zip(&sol.errors)
        .zip(y)
        .map(|((a, e), yi)| {
            let r = yi * e;
            let mut v = 0.0f64;
            if *a < c {
                v = v.max(-r);
            }
            if *a > 0.0 {
                v = v.max(r);
            }
            v
        })
        .fold(0.0, f64::max)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Dot products between two row sets, `a.len() x b.len()`, row-major.
fn dot_block(a: &[&[f64]], b: &[&[f64]], dim: usize) -> Vec<f64> {
    let (m, n) = (a.len(), b.len());
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || dim == 0 {
        return out;
    }
    let flat_a: Vec<f64> = a.iter().flat_map(|r| r.iter().copied()).collect();
    let flat_b: Vec<f64> = b.iter().flat_map(|r| r.iter().copied()).collect();
    // SAFETY: buffers are sized m*dim, n*dim and m*n and the strides
    // describe row-major A, transposed row-major B and row-major C.
    unsafe {
        matrixmultiply::dgemm(
            m,
            dim,
            n,
            1.0,
            flat_a.as_ptr(),
            dim as isize,
            1,
            flat_b.as_ptr(),
            1,
            dim as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// One binary machine: `pos` wins when the decision value is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Machine {
    pub pos: usize,
    pub neg: usize,
    /// Indices into the support-vector pool.
    pub sv: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub b: f64,
    /// Set when one side of the pair had no training samples.
    pub constant: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub dim: usize,
    pub num_classes: usize,
    pub gamma: f64,
    pub c: f64,
    pub pool: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
}

impl SvmModel {
    pub fn degenerate_machines(&self) -> usize {
        self.machines.iter().filter(|m| m.constant.is_some()).count()
    }

    fn kernels(&self, x: &[f64]) -> Vec<f64> {
        self.pool
            .iter()
            .map(|sv| (-self.gamma * sq_dist(sv, x)).exp())
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Decision value of every machine, in machine order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let k = self.kernels(x);
        Ok(self
            .machines
            .iter()
            .map(|m| match m.constant {
                Some(c) if c == m.pos => 1.0,
                Some(_) => -1.0,
                None => m.sv.iter().zip(&m.coef).map(|(s, a)| a * k[*s]).sum::<f64>() + m.b,
            })
            .collect())
    }

    /// Per-class `(votes, summed margin)`.
    pub fn tally(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        let dv = self.decision_values(x)?;
        let mut tally = vec![(0usize, 0.0f64); self.num_classes];
        for (m, d) in self.machines.iter().zip(dv) {
            let winner = if d >= 0.0 { m.pos } else { m.neg };
            tally[winner].0 += 1;
            tally[m.pos].1 += d;
            tally[m.neg].1 -= d;
        }
        Ok(tally)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let tally = self.tally(x)?;
        let mut best = 0;
        for c in 1..tally.len() {
            let (v, m) = tally[c];
            let (bv, bm) = tally[best];
            if v > bv || (v == bv && m > bm) {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn vote_shares(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tally = self.tally(x)?;
        let total = self.machines.len().max(1) as f64;
        Ok(tally.into_iter().map(|(v, _)| v as f64 / total).collect())
    }

    pub fn write_params(&self, file: &mut ModelFile) {
        file.push(ParamBlock::scalar("svm.dim", self.dim as f64));
        file.push(ParamBlock::scalar("svm.num_classes", self.num_classes as f64));
        file.push(ParamBlock::scalar("svm.gamma", self.gamma));
        file.push(ParamBlock::scalar("svm.c", self.c));
        file.push(ParamBlock::new(
            "svm.pool",
            vec![self.pool.len(), self.dim],
            self.pool.iter().flatten().copied().collect(),
        ));
        for (k, m) in self.machines.iter().enumerate() {
            let constant = m.constant.map_or(-1.0, |c| c as f64);
            file.push(ParamBlock::new(
                format!("svm.m{k}.head"),
                vec![4],
                vec![m.pos as f64, m.neg as f64, m.b, constant],
            ));
            file.push(ParamBlock::from_usizes(format!("svm.m{k}.sv"), &m.sv));
            file.push(ParamBlock::new(
                format!("svm.m{k}.coef"),
                vec![m.coef.len()],
                m.coef.clone(),
            ));
        }
    }

    pub fn read_params(file: &ModelFile) -> Result<Self> {
        let dim = file.scalar("svm.dim")? as usize;
        let num_classes = file.scalar("svm.num_classes")? as usize;
        let gamma = file.scalar("svm.gamma")?;
        let c = file.scalar("svm.c")?;
        let pool_block = file.block("svm.pool")?;
        if pool_block.shape.len() != 2 || pool_block.shape[1] != dim {
            return Err(Error::Model("svm.pool has the wrong shape".into()));
        }
        let pool: Vec<Vec<f64>> = if dim == 0 {
            Vec::new()
        } else {
            pool_block.data.chunks(dim).map(|r| r.to_vec()).collect()
        };
        let mut machines = Vec::new();
        for k in 0..num_classes * num_classes.saturating_sub(1) / 2 {
            let head = file.data(&format!("svm.m{k}.head"), &[4])?;
            let sv = file.usizes(&format!("svm.m{k}.sv"))?;
            let coef = file.data(&format!("svm.m{k}.coef"), &[sv.len()])?.to_vec();
            if sv.iter().any(|s| *s >= pool.len()) {
                return Err(Error::Model("support vector index out of range".into()));
            }
            machines.push(Machine {
                pos: head[0] as usize,
                neg: head[1] as usize,
                b: head[2],
                constant: (head[3] >= 0.0).then_some(head[3] as usize),
                sv,
                coef,
            });
        }
        Ok(SvmModel {
            dim,
            num_classes,
            gamma,
            c,
            pool,
            machines,
        })
    }
}

/// Trains one-vs-one machines for every class pair in `0..=max(y)`.
pub fn svm_fit(x: &[Vec<f64>], y: &[usize], cfg: SvmConfig) -> Result<SvmModel> {
    if !(cfg.c > 0.0 && cfg.gamma > 0.0) {
        return Err(Error::InvalidArgument("C and gamma must be positive".into()));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("ragged training rows".into()));
    }
    let num_classes = y.iter().max().copied().unwrap_or(0) + 1;
    let by_class: Vec<Vec<usize>> = (0..num_classes)
        .map(|c| (0..y.len()).filter(|i| y[*i] == c).collect())
        .collect();
    if by_class.iter().filter(|v| !v.is_empty()).count() < 2 {
        return Err(Error::InvalidArgument("SVM needs at least two classes".into()));
    }
    let rows = |idx: &[usize]| idx.iter().map(|i| x[*i].as_slice()).collect::<Vec<_>>();
    let norms: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    // Within-class dot products are shared by every machine of that class.
    let diag: Vec<Vec<f64>> = by_class
        .iter()
        .map(|idx| dot_block(&rows(idx), &rows(idx), dim))
        .collect();

    let mut pool_index = vec![usize::MAX; x.len()];
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut machines = Vec::new();
    let mut machine_no = 0u64;
    for a in 0..num_classes {
        for bcls in a + 1..num_classes {
            let (ia, ib) = (&by_class[a], &by_class[bcls]);
            machine_no += 1;
            if ia.is_empty() || ib.is_empty() {
                let present = if ia.is_empty() { bcls } else { a };
                if !(ia.is_empty() && ib.is_empty()) {
                    log::warn!("SVM machine {a} vs {bcls} is constant: one class has no samples");
                }
                machines.push(Machine {
                    pos: a,
                    neg: bcls,
                    sv: Vec::new(),
                    coef: Vec::new(),
                    b: 0.0,
                    constant: Some(present),
                });
                continue;
            }
            let cross = dot_block(&rows(ia), &rows(ib), dim);
            let (na, nb) = (ia.len(), ib.len());
            let n = na + nb;
            let idx: Vec<usize> = ia.iter().chain(ib).copied().collect();
            let labels: Vec<f64> = (0..n).map(|i| if i < na { 1.0 } else { -1.0 }).collect();
            let mut kernel = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let dot = match (i < na, j < na) {
                        (true, true) => diag[a][i * na + j],
                        (false, false) => diag[bcls][(i - na) * nb + (j - na)],
                        (true, false) => cross[i * nb + (j - na)],
                        (false, true) => cross[j * nb + (i - na)],
                    };
                    let d2 = (norms[idx[i]] + norms[idx[j]] - 2.0 * dot).max(0.0);
                    kernel[i * n + j] = (-cfg.gamma * d2).exp();
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(machine_no));
            let sol = smo_binary(
                &kernel,
                &labels,
                cfg.c,
                cfg.tol,
                cfg.max_passes,
                cfg.max_sweeps,
                &mut rng,
            );
            let mut sv = Vec::new();
            let mut coef = Vec::new();
            for (i, al) in sol.alpha.iter().enumerate() {
                if *al > 0.0 {
                    let orig = idx[i];
                    if pool_index[orig] == usize::MAX {
                        pool_index[orig] = pool.len();
                        pool.push(x[orig].clone());
                    }
                    sv.push(pool_index[orig]);
                    coef.push(al * labels[i]);
                }
            }
            machines.push(Machine {
                pos: a,
                neg: bcls,
                sv,
                coef,
                b: sol.b,
                constant: None,
            });
        }
    }
    Ok(SvmModel {
        dim,
        num_classes,
        gamma: cfg.gamma,
        c: cfg.c,
        pool,
        machines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let centre = if c == 0 { -30.0 } else { 30.0 };
            x.push(vec![
                centre + rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_default_hyperparameters() {
        let (x, y) = blobs(1);
        let m = svm_fit(&x, &y, SvmConfig::new(2f64.powi(7), 2f64.powi(-11))).unwrap();
        for (r, l) in x.iter().zip(&y) {
            assert_eq!(m.predict(r).unwrap(), *l);
        }
    }

    #[test]
    fn dual_bounds_and_kkt() {
        let (x, y) = blobs(2);
        let labels: Vec<f64> = y.iter().map(|c| if *c == 0 { 1.0 } else { -1.0 }).collect();
        let gamma = 0.01;
        let n = x.len();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                kernel[i * n + j] = (-gamma * sq_dist(&x[i], &x[j])).exp();
            }
        }
        let c = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sol = smo_binary(&kernel, &labels, c, 1e-3, 20, 100_000, &mut rng);
        assert!(sol.alpha.iter().all(|a| *a >= 0.0 && *a <= c));
        assert!(kkt_violation(&sol, &labels, c) <= 1e-3);
        let dual_sum: f64 = sol.alpha.iter().zip(&labels).map(|(a, y)| a * y).sum();
        assert!(dual_sum.abs() < 1e-9);
    }

    #[test]
    fn decision_matches_kernel_sum() {
        let (x, y) = blobs(3);
        let m = svm_fit(&x, &y, SvmConfig::new(4.0, 0.05)).unwrap();
        let mach = &m.machines[0];
        let q = [1.5, -2.0];
        let direct: f64 = mach
            .sv
            .iter()
            .zip(&mach.coef)
            .map(|(s, a)| {
                let d: f64 = m.pool[*s].iter().zip(&q).map(|(p, v)| (p - v).powi(2)).sum();
                a * (-0.05 * d).exp()
            })
            .sum::<f64>()
            + mach.b;
        let got = m.decision_values(&q).unwrap()[0];
        assert!((got - direct).abs() <= 1e-9);
    }

    #[test]
    fn missing_class_gives_constant_machine() {
        let x = vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]];
        let y = vec![0, 0, 2, 2];
        let m = svm_fit(&x, &y, SvmConfig::new(10.0, 0.5)).unwrap();
        assert_eq!(m.machines.len(), 3);
        assert_eq!(m.degenerate_machines(), 2);
        assert_eq!(m.predict(&[0.2]).unwrap(), 0);
        assert_eq!(m.predict(&[5.8]).unwrap(), 2);
    }

    #[test]
    fn single_class_errors() {
        assert!(svm_fit(&[vec![0.0], vec![1.0]], &[1, 1], SvmConfig::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn params_round_trip() {
        let (x, y) = blobs(4);
        let m = svm_fit(&x, &y, SvmConfig::new(1.0, 0.1)).unwrap();
        let mut f = ModelFile::new(crate::model_file::ModelKind::Svm, "t");
        m.write_params(&mut f);
        assert_eq!(SvmModel::read_params(&f).unwrap(), m);
    }
}
