//! Empirical measures over equal-weight particle clouds.
//!
//! Every sum over particles goes through [`sum_by`], which returns the
//! correctly rounded value of the exact sum (Shewchuk's non-overlapping
//! partials). Leaves of [`REDUCTION_BLOCK`] terms may be accumulated on
//! different rayon workers; because the result is the rounded exact sum it
//! is bit-identical under any worker count and any atom permutation.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Leaf size of the reduction.
pub const REDUCTION_BLOCK: usize = 256;

const PARALLEL_LEAVES: usize = 64;

/// Exact floating-point accumulator.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    /// Non-overlapping partials in increasing magnitude.
    partials: Vec<f64>,
    /// Accumulates infinities and NaNs, which have no exact representation.
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        if !value.is_finite() {
            self.special += value;
            return;
        }
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = if hi.is_finite() { y - (hi - x) } else { 0.0 };
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        if x.is_finite() {
            self.partials.push(x);
        } else {
            // overflow of the running total
            self.special += x;
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.special += other.special;
    }

    /// Correctly rounded total (round-half-even).
    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Correctly rounded `term(0) + ... + term(n - 1)`.
pub fn sum_by<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let leaves = n.div_ceil(REDUCTION_BLOCK);
    let leaf = |b: usize| {
        let lo = b * REDUCTION_BLOCK;
        let hi = (lo + REDUCTION_BLOCK).min(n);
        let mut acc = ExactSum::new();
        for i in lo..hi {
            acc.add(term(i));
        }
        acc
    };
    if leaves >= PARALLEL_LEAVES {
        let parts: Vec<ExactSum> = (0..leaves).into_par_iter().map(leaf).collect();
        let mut total = ExactSum::new();
        for p in &parts {
            total.merge(p);
        }
        total.value()
    } else {
        let mut total = ExactSum::new();
        for i in 0..n {
            total.add(term(i));
        }
        total.value()
    }
}

/// Correctly rounded sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    sum_by(values.len(), |i| values[i])
}

/// N atoms in R^d stored row-major, plus the step they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    atoms: Vec<f64>,
    n: usize,
    d: usize,
    pub step: u64,
    pub time: f64,
    pub diverged: bool,
}

impl ParticleCloud {
    pub fn new(atoms: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("cloud dimension must be positive"));
        }
        if atoms.is_empty() || atoms.len() % d != 0 {
            return Err(Error::invalid(format!(
                "cloud needs a positive multiple of d={d} coordinates, got {}",
                atoms.len()
            )));
        }
        let n = atoms.len() / d;
        let diverged = atoms.iter().any(|x| !x.is_finite());
        Ok(Self {
            atoms,
            n,
            d,
            step: 0,
            time: 0.0,
            diverged,
        })
    }

    /// Scalar cloud (d = 1).
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::new(vec![0.0; n * d], d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atoms_mut(&mut self) -> &mut [f64] {
        &mut self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.d..(i + 1) * self.d]
    }

    pub fn with_step(mut self, step: u64, time: f64) -> Self {
        self.step = step;
        self.time = time;
        self
    }

    fn ensure_live(&self) -> Result<()> {
        if self.diverged {
            Err(Error::DivergedCloud)
        } else {
            Ok(())
        }
    }

    /// Read-only measure view with mean and second moment precomputed.
    pub fn view(&self) -> Result<MeasureView<'_>> {
        self.ensure_live()?;
        Ok(MeasureView::from_atoms(&self.atoms, self.d))
    }

    /// Writes one row per particle, coordinates comma-separated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.d).map(|c| format!("x{c}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self.atom(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut d = None;
        let mut atoms = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if d.is_none() {
                d = Some(line.split(',').count());
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("cloud csv line {}: {e}", lineno + 1)))?;
            if Some(row.len()) != d {
                return Err(Error::invalid(format!(
                    "cloud csv line {}: expected {} columns",
                    lineno + 1,
                    d.unwrap_or(0)
                )));
            }
            atoms.extend(row);
        }
        Self::new(atoms, d.unwrap_or(0))
    }
}

/// Read-only view of the measure the coefficients see.
///
/// Built once per step from the previous cloud. A view can also stand for a
/// known limit law (`from_moments`), in which case no atoms are available.
#[derive(Debug, Clone)]
pub struct MeasureView<'a> {
    atoms: &'a [f64],
    d: usize,
    mean: Vec<f64>,
    second_moment: f64,
}

impl<'a> MeasureView<'a> {
    pub fn from_atoms(atoms: &'a [f64], d: usize) -> Self {
        let n = atoms.len() / d;
        let inv = 1.0 / n as f64;
        let mean = (0..d)
            .map(|c| sum_by(n, |i| atoms[i * d + c]) * inv)
            .collect();
        let second_moment = sum_by(atoms.len(), |i| atoms[i] * atoms[i]) * inv;
        Self {
            atoms,
            d,
            mean,
            second_moment,
        }
    }

    /// Law surrogate known only through its mean and second moment.
    pub fn from_moments(mean: Vec<f64>, second_moment: f64) -> MeasureView<'static> {
        MeasureView {
            atoms: &[],
            d: mean.len(),
            mean,
            second_moment,
        }
    }

    /// Dirac mass at the origin.
    pub fn delta_zero(d: usize) -> MeasureView<'static> {
        Self::from_moments(vec![0.0; d], 0.0)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// First coordinate of the mean; the presets are all scalar.
    pub fn mean1(&self) -> f64 {
        self.mean[0]
    }

    /// `∫|x|^2 μ(dx)`, i.e. the squared W2 distance to the Dirac mass at 0.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Number of atoms, zero for a law surrogate.
    pub fn len(&self) -> usize {
        self.atoms.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &'a [f64] {
        self.atoms
    }

    pub fn atom(&self, i: usize) -> &'a [f64] {
        &self.atoms[i * self.d..(i + 1) * self.d]
    }
}

/// Arithmetic mean of the atoms.
pub fn mean(cloud: &ParticleCloud) -> Result<Vec<f64>> {
    Ok(cloud.view()?.mean)
}

/// `W2(μ, δ0) = (1/N Σ|x_i|^2)^{1/2}`.
pub fn w2_to_delta0(cloud: &ParticleCloud) -> Result<f64> {
    Ok(cloud.view()?.second_moment.sqrt())
}

/// `(1/N) Σ |x_i|^p` with the Euclidean norm.
pub fn raw_moment(cloud: &ParticleCloud, p: f64) -> Result<f64> {
    cloud.ensure_live()?;
    if !(p > 0.0) {
        return Err(Error::invalid(format!("moment order must be positive, got {p}")));
    }
    let d = cloud.d;
    let atoms = &cloud.atoms;
    let s = sum_by(cloud.n, |i| {
        let sq: f64 = atoms[i * d..(i + 1) * d].iter().map(|v| v * v).sum();
        if p == 2.0 {
            sq
        } else {
            sq.sqrt().powf(p)
        }
    });
    Ok(s / cloud.n as f64)
}

fn check_pair(a: &ParticleCloud, b: &ParticleCloud) -> Result<()> {
    a.ensure_live()?;
    b.ensure_live()?;
    if a.n != b.n {
        return Err(Error::invalid(format!(
            "W2 between equal-weight clouds needs equal sizes, got {} and {}",
            a.n, b.n
        )));
    }
    if a.d != b.d {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.d, b.d
        )));
    }
    Ok(())
}

/// Exact W2 between two equal-size scalar clouds via the monotone coupling.
pub fn w2_1d(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    check_pair(a, b)?;
    if a.d != 1 {
        return Err(Error::invalid(format!("w2_1d needs d = 1, got {}", a.d)));
    }
    Ok(w2_sorted(a.atoms(), b.atoms()))
}

/// W2 between two scalar atom lists of equal length (sorted internally).
pub fn w2_sorted(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    (sum_by(xs.len(), |i| (xs[i] - ys[i]).powi(2)) / xs.len() as f64).sqrt()
}

/// Exact W2 in any dimension through a minimum-cost perfect matching.
///
/// O(N^3); meant as an oracle for small clouds.
pub fn w2_assignment(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    check_pair(a, b)?;
    Ok(w2_atoms(a.atoms(), b.atoms(), a.d))
}

/// W2 between two equal-size atom arrays in R^d.
pub fn w2_atoms(a: &[f64], b: &[f64], d: usize) -> f64 {
    let n = a.len() / d;
    if d == 1 {
        return w2_sorted(a, b);
    }
    let cost = |i: usize, j: usize| -> f64 {
        a[i * d..(i + 1) * d]
            .iter()
            .zip(&b[j * d..(j + 1) * d])
            .map(|(x, y)| (x - y).powi(2))
            .sum()
    };
    let assignment = min_cost_assignment(n, cost);
    let total = sum_by(n, |i| cost(i, assignment[i]));
    (total / n as f64).sqrt()
}

/// Hungarian algorithm with potentials (shortest augmenting paths).
/// Returns `assignment[row] = column`.
pub fn min_cost_assignment<F: Fn(usize, usize) -> f64>(n: usize, cost: F) -> Vec<usize> {
    // 1-based bookkeeping; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost(r - 1, col - 1) - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: &[f64]) -> ParticleCloud {
        ParticleCloud::from_scalars(v).unwrap()
    }

    /// Exhaustive oracle: minimum over all N! pairings.
    fn brute_force_w2(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &[f64], used: &mut Vec<bool>, i: usize, acc: f64, best: &mut f64) {
            if i == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    rec(a, b, used, i + 1, acc + (a[i] - b[j]).powi(2), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
        (best / a.len() as f64).sqrt()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&c(&[1.0, 2.0, 3.0])).unwrap(), vec![2.0]);
        assert_eq!(mean(&c(&[-7.25])).unwrap(), vec![-7.25]);
        assert_eq!(mean(&c(&[-5.0, 5.0])).unwrap(), vec![0.0]);
    }

    #[test]
    fn w2_to_delta0_examples() {
        assert!((w2_to_delta0(&c(&[3.0, 4.0])).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(w2_to_delta0(&c(&[0.0; 5])).unwrap(), 0.0);
        let p = ParticleCloud::new(vec![3.0, 4.0], 2).unwrap();
        assert_eq!(w2_to_delta0(&p).unwrap(), 5.0);
    }

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2_1d(&c(&[0.0, 0.0]), &c(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(w2_1d(&c(&[1.0, 3.0]), &c(&[3.0, 1.0])).unwrap(), 0.0);
        let w = w2_1d(&c(&[0.0, 2.0]), &c(&[1.0, 5.0])).unwrap();
        assert!((w - brute_force_w2(&[0.0, 2.0], &[1.0, 5.0])).abs() < 1e-15);
        assert!((w - 2.2360680).abs() < 1e-7);
    }

    #[test]
    fn w2_1d_matches_brute_force() {
        let a = [0.3, -1.2, 4.0, 2.2, -0.7, 1.1];
        let b = [2.5, 0.0, -3.1, 0.9, 1.7, -0.2];
        let w = w2_1d(&c(&a), &c(&b)).unwrap();
        assert!((w - brute_force_w2(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn assignment_examples() {
        let a = c(&[0.5, -2.0, 9.0]);
        assert_eq!(w2_assignment(&a, &a).unwrap(), 0.0);
        let p = ParticleCloud::new(vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
        let q = ParticleCloud::new(vec![1.0, 1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(w2_assignment(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn assignment_in_2d_matches_enumeration() {
        // 4 atoms: check against all 24 permutations.
        let a: [f64; 8] = [0.0, 0.0, 1.0, 0.5, -2.0, 1.0, 0.3, -0.4];
        let b: [f64; 8] = [1.0, 1.0, -1.0, 0.2, 0.0, -1.0, 2.0, 0.0];
        let perms = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let cost = |i: usize, j: usize| (a[2 * i] - b[2 * j]).powi(2) + (a[2 * i + 1] - b[2 * j + 1]).powi(2);
        let best = perms
            .iter()
            .map(|p| (0..4).map(|i| cost(i, p[i])).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let w = w2_atoms(&a, &b, 2);
        assert!((w - (best / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn raw_moment_examples() {
        assert_eq!(raw_moment(&c(&[1.0, 1.0, 1.0]), 2.0).unwrap(), 1.0);
        assert_eq!(raw_moment(&c(&[2.0]), 4.0).unwrap(), 16.0);
        assert_eq!(raw_moment(&c(&[0.0, 2.0]), 2.0).unwrap(), 2.0);
        assert!(raw_moment(&c(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn error_paths() {
        assert!(w2_1d(&c(&[1.0]), &c(&[1.0, 2.0])).is_err());
        let p = ParticleCloud::new(vec![0.0, 0.0], 2).unwrap();
        assert!(w2_1d(&p, &p).is_err());
        assert!(w2_assignment(&c(&[1.0]), &c(&[1.0, 2.0])).is_err());
        let bad = c(&[1.0, f64::NAN]);
        assert!(bad.diverged);
        assert!(matches!(mean(&bad), Err(Error::DivergedCloud)));
        assert!(matches!(w2_to_delta0(&bad), Err(Error::DivergedCloud)));
        assert!(matches!(raw_moment(&bad, 2.0), Err(Error::DivergedCloud)));
        assert!(ParticleCloud::new(vec![], 1).is_err());
        assert!(ParticleCloud::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn exact_sum_known_values() {
        assert_eq!(sum(&[1e100, 1.0, -1e100]), 1.0);
        assert_eq!(sum(&[0.1; 10]), 1.0);
        // Intermediate overflow is reported, not silently recovered.
        assert_eq!(sum(&[1e308, 1e308, -1e308]), f64::INFINITY);
        assert_eq!(sum(&[]), 0.0);
        assert!(sum(&[1.0, f64::NAN]).is_nan());
        assert_eq!(sum(&[1.0, f64::INFINITY]), f64::INFINITY);
        // 2^53 + 1 + 2^-52 must round up, not to even.
        let big = 9007199254740992.0;
        assert_eq!(sum(&[big, 1.0, 2f64.powi(-52)]), big + 2.0);
    }

    #[test]
    fn sum_is_independent_of_thread_count() {
        let values: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = serial.install(|| sum(&values));
        let b = wide.install(|| sum(&values));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn csv_round_trip() {
        let p = ParticleCloud::new(vec![0.1, -2.5, 3.0, 1e-300], 2).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = ParticleCloud::read_csv(&buf[..]).unwrap();
        assert_eq!(p.atoms(), q.atoms());
    }

    fn scalar_cloud(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 1..max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sorting_agrees_with_assignment(pair in (1usize..64).prop_flat_map(|n| (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        ))) {
            let (a, b) = pair;
            let by_sort = w2_1d(&c(&a), &c(&b)).unwrap();
            let cost = |i: usize, j: usize| (a[i] - b[j]).powi(2);
            let asg = min_cost_assignment(a.len(), cost);
            let by_matching = ((0..a.len()).map(|i| cost(i, asg[i])).sum::<f64>() / a.len() as f64).sqrt();
            prop_assert!((by_sort - by_matching).abs() < 1e-10, "{} vs {}", by_sort, by_matching);
        }

        #[test]
        fn triangle_inequality(triple in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        ))) {
            let (a, b, x) = triple;
            let (a, b, x) = (c(&a), c(&b), c(&x));
            let lhs = w2_1d(&a, &x).unwrap();
            let rhs = w2_1d(&a, &b).unwrap() + w2_1d(&b, &x).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn delta0_is_distance_to_zero_cloud(v in scalar_cloud(50)) {
            let cloud = c(&v);
            let zero = ParticleCloud::zeros(v.len(), 1).unwrap();
            let a = w2_to_delta0(&cloud).unwrap();
            let b = w2_1d(&cloud, &zero).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn jensen(v in scalar_cloud(600)) {
            let cloud = c(&v);
            let m = mean(&cloud).unwrap()[0];
            prop_assert!(m * m <= raw_moment(&cloud, 2.0).unwrap() * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn permutation_invariance_is_bit_exact(v in scalar_cloud(40 * REDUCTION_BLOCK), rot in 0usize..1000) {
            let mut perm = v.clone();
            perm.reverse();
            let k = rot % perm.len();
            perm.rotate_left(k);
            let (a, b) = (c(&v), c(&perm));
            prop_assert_eq!(mean(&a).unwrap()[0].to_bits(), mean(&b).unwrap()[0].to_bits());
            prop_assert_eq!(raw_moment(&a, 2.0).unwrap().to_bits(), raw_moment(&b, 2.0).unwrap().to_bits());
            prop_assert_eq!(raw_moment(&a, 3.0).unwrap().to_bits(), raw_moment(&b, 3.0).unwrap().to_bits());
        }
    }
}
