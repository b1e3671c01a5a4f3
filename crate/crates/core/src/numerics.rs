//! Small numerical helpers shared by the recursions.

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Table of `ln k!` for `k = 0..=max`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `1 - (1 - p)^d`, accurate for tiny `p`.
pub fn one_minus_pow_complement(p: f64, d: u32) -> f64 {
    if d == 0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    -((d as f64) * (-p).ln_1p()).exp_m1()
}

/// Binomial mass `C(d, k) p^k (1-p)^(d-k)` using a log-factorial table.
pub fn binomial_mass(d: u32, k: u32, p: f64, ln_fact: &[f64]) -> f64 {
    if k > d {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == d { 1.0 } else { 0.0 };
    }
    let (d_, k_) = (d as usize, k as usize);
    let ln_choose = ln_fact[d_] - ln_fact[k_] - ln_fact[d_ - k_];
    let ln_mass = ln_choose + (k as f64) * p.ln() + ((d - k) as f64) * (-p).ln_1p();
    ln_mass.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [-3.0, 0.5, 2.0, -700.0, 1.25];
        let mut acc = LogSumExp::default();
        for &x in &xs {
            acc.push(x);
        }
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((acc.value() - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_merge_is_order_free() {
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for x in [1.0, 900.0, -2.0] {
            a.push(x);
        }
        for x in [905.0, 3.0] {
            b.push(x);
        }
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert!((ab.value() - ba.value()).abs() < 1e-12);
        assert!(ab.value().is_finite());
    }

    #[test]
    fn binomial_masses_sum_to_one() {
        let lf = ln_factorials(40);
        for &p in &[1e-9, 0.3, 0.999] {
            let s: f64 = (0..=40).map(|k| binomial_mass(40, k, p, &lf)).sum();
            assert!((s - 1.0).abs() < 1e-12, "p={p} sum={s}");
        }
        assert_eq!(binomial_mass(3, 3, 1.0, &lf), 1.0);
        assert_eq!(binomial_mass(3, 2, 1.0, &lf), 0.0);
    }

    #[test]
    fn complement_power_small_p() {
        let v = one_minus_pow_complement(1e-18, 3);
        assert!((v / 3e-18 - 1.0).abs() < 1e-12);
        assert_eq!(one_minus_pow_complement(0.5, 0), 0.0);
    }
}
