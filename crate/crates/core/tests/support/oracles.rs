//! Brute-force reference implementations. Nothing here calls into the
//! library's numerics; the only shared items are plain data types.

/// Which of the two truncation rules an oracle should apply. Kept separate
/// from the library enum so the oracles do not depend on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    Normalize,
    Remainder,
}

impl From<ponderlab::TruncationMode> for Truncation {
    fn from(mode: ponderlab::TruncationMode) -> Self {
        match mode {
            ponderlab::TruncationMode::NormalizeToOne => Truncation::Normalize,
            ponderlab::TruncationMode::RemainderToLast => Truncation::Remainder,
        }
    }
}

/// Double-double number: `hi + lo` with `|lo| ≤ ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from_f64(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from_f64(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }
}

/// Halting distribution by literal evaluation of
/// `pₙ = λₙ ∏_{j<n} (1 − λⱼ)` in double-double arithmetic.
///
/// `Remainder` gives the last step `1 − Σ_{n<N} pₙ`; `Normalize` divides every
/// raw `pₙ` by their total.
pub fn oracle_halting(lambdas: &[f64], mode: Truncation) -> Vec<f64> {
    let n = lambdas.len();
    assert!(n >= 1, "oracle needs at least one step");
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let mut prod = Dd::ONE;
        for &l in &lambdas[..i] {
            prod = prod.mul(Dd::ONE.sub(Dd::from_f64(l)));
        }
        raw.push(Dd::from_f64(lambdas[i]).mul(prod));
    }
    match mode {
        Truncation::Remainder => {
            let mut earlier = Dd::ZERO;
            for p in &raw[..n - 1] {
                earlier = earlier.add(*p);
            }
            raw[n - 1] = Dd::ONE.sub(earlier);
            raw.iter().map(|p| p.to_f64()).collect()
        }
        Truncation::Normalize => {
            let total = raw.iter().fold(Dd::ZERO, |acc, p| acc.add(*p));
            raw.iter().map(|p| p.div(total).to_f64()).collect()
        }
    }
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `Σ pₙ ℓₙ` by direct summation.
pub fn oracle_expected_loss(p: &[f64], losses: &[f64]) -> f64 {
    assert_eq!(p.len(), losses.len());
    neumaier_sum(p.iter().zip(losses).map(|(a, b)| a * b))
}

/// Truncated geometric pmf `q_n ∝ λ(1 − λ)^{n−1}` over `1..=n`, renormalized.
pub fn oracle_geometric(lambda_p: f64, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| lambda_p * (1.0 - lambda_p).powi(k as i32)).collect();
    let total = neumaier_sum(raw.iter().copied());
    raw.iter().map(|q| q / total).collect()
}

/// `Σ pₙ (ln pₙ − ln qₙ)`, skipping `pₙ = 0`.
pub fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    neumaier_sum(
        p.iter()
            .zip(q)
            .filter(|(pn, _)| **pn != 0.0)
            .map(|(pn, qn)| pn * (pn.ln() - qn.ln())),
    )
}

pub fn oracle_mean_steps(p: &[f64]) -> f64 {
    neumaier_sum(p.iter().enumerate().map(|(i, pn)| (i + 1) as f64 * pn))
}

/// Binary cross-entropy on a probability clamped to `[1e-7, 1 − 1e-7]`.
pub fn oracle_bce(prediction: f64, target: f64) -> f64 {
    let p = prediction.clamp(1e-7, 1.0 - 1e-7);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Counts the `+1` entries one at a time and reports whether the count is odd.
pub fn naive_parity(row: &[f64]) -> f64 {
    let mut ones = 0u32;
    for &v in row {
        if v == 1.0 {
            ones += 1;
        }
    }
    if ones % 2 == 1 {
        1.0
    } else {
        0.0
    }
}

/// ACT halting by the cumulative rule: `(N_act, remainder)`.
pub fn oracle_act(lambdas: &[f64], epsilon: f64, n_max: usize) -> (usize, f64) {
    let mut cumulative = 0.0;
    for n in 1..=n_max {
        let before = cumulative;
        cumulative += lambdas[n - 1];
        if cumulative >= 1.0 - epsilon || n == n_max {
            return (n, 1.0 - before);
        }
    }
    unreachable!("n_max reached inside the loop")
}

/// `½ Σ |a − b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Outcome of comparing an implementation against an oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        OracleReport {
            name: name.into(),
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            tolerance,
        }
    }

    pub fn observe(&mut self, actual: f64, expected: f64) {
        let abs = (actual - expected).abs();
        let rel = abs / actual.abs().max(expected.abs()).max(1e-300);
        self.max_abs_error = self.max_abs_error.max(abs);
        self.max_rel_error = self.max_rel_error.max(if abs == 0.0 { 0.0 } else { rel });
        if !actual.is_finite() || !expected.is_finite() {
            self.max_abs_error = f64::INFINITY;
        }
    }

    pub fn observe_all(&mut self, actual: &[f64], expected: &[f64]) {
        assert_eq!(actual.len(), expected.len(), "{}: length mismatch", self.name);
        for (a, e) in actual.iter().zip(expected) {
            self.observe(*a, *e);
        }
    }

    /// Passes when the largest absolute error is within tolerance.
    pub fn passed_abs(&self) -> bool {
        self.max_abs_error <= self.tolerance
    }

    pub fn passed_rel(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}
