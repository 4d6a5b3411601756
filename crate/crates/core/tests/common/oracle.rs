//! Independent 256-bit evaluation of the bound formulas.

use std::cell::RefCell;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode};
use probsum::bounds::{
    bound_thm33, bound_thm41, bound_thm51, bound_thm52, gamma_tilde, geometric_factor, kappa, lambda, sbound,
    BoundInputs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REL_TOL: f64 = 1e-12;
const P: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Oracle {
    cc: RefCell<Consts>,
    pub worst: f64,
    pub worst_label: String,
    pub checked: usize,
}

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

fn int(n: usize) -> BigFloat {
    BigFloat::from_f64(n as f64, P)
}

/// Correctly rounded binary64 value (infinite past the finite range).
pub fn to_f64(x: &BigFloat) -> f64 {
    format!("{x}").parse::<f64>().expect("decimal rendering of a BigFloat")
}

impl Oracle {
    pub fn new() -> Self {
        Oracle { cc: RefCell::new(Consts::new().expect("constant cache")), worst: 0.0, worst_label: String::new(), checked: 0 }
    }

    /// `lambda(delta / div)` with the division carried out exactly.
    pub fn lambda_big(&self, delta: f64, div: usize) -> BigFloat {
        let two = big(2.0);
        let arg = two.mul(&int(div), P, RM).div(&big(delta), P, RM);
        arg.ln(P, RM, &mut self.cc.borrow_mut()).mul(&two, P, RM).sqrt(P, RM)
    }

    pub fn lambda(&self, delta: f64, div: usize) -> BigFloat {
        self.lambda_big(delta, div)
    }

    fn gamma_with(&self, n: usize, lam: &BigFloat, u: f64) -> BigFloat {
        let u = big(u);
        let nb = int(n);
        let num = lam.mul(&nb.sqrt(P, RM), P, RM).mul(&u, P, RM).add(&nb.mul(&u, P, RM).mul(&u, P, RM), P, RM);
        let arg = num.div(&big(1.0).sub(&u, P, RM), P, RM);
        arg.exp(P, RM, &mut self.cc.borrow_mut()).sub(&big(1.0), P, RM)
    }

    pub fn gamma_tilde(&self, n: usize, delta: f64, div: usize, u: f64) -> BigFloat {
        let lam = self.lambda_big(delta, div);
        self.gamma_with(n, &lam, u)
    }

    pub fn kappa(&self, n: usize, delta: f64, u: f64) -> BigFloat {
        self.kappa_with(n, &self.lambda_big(delta, n - 1), u)
    }

    fn kappa_with(&self, n: usize, lam: &BigFloat, u: f64) -> BigFloat {
        lam.mul(&int(n).sqrt(P, RM), P, RM).mul(&big(u), P, RM)
    }

    fn geometric_big(&self, k: &BigFloat, n: usize) -> BigFloat {
        let one = big(1.0);
        let m = n - 1;
        if k.cmp(&one) == Some(0) {
            return int(m);
        }
        let pow = k.powi(m, P, RM);
        one.sub(&pow, P, RM).div(&one.sub(k, P, RM), P, RM)
    }

    pub fn geometric(&self, k: f64, n: usize) -> BigFloat {
        self.geometric_big(&big(k), n)
    }

    pub fn sbound(&self, n: usize, delta: f64, mu: f64, c: f64) -> BigFloat {
        self.sbound_with(n, &self.lambda_big(delta, n), mu, c)
    }

    fn sbound_with(&self, n: usize, lam: &BigFloat, mu: f64, c: f64) -> BigFloat {
        let nb = int(n);
        let mean = nb.mul(&nb.sqrt(P, RM), P, RM).mul(&big(mu.abs()), P, RM);
        mean.add(&nb.mul(&big(c), P, RM).mul(lam, P, RM), P, RM)
    }

    pub fn thm33(&self, i: &BoundInputs<f64>) -> BigFloat {
        self.thm33_with(i, &self.lambda_big(i.failure_prob, 2))
    }

    fn thm33_with(&self, i: &BoundInputs<f64>, lam: &BigFloat) -> BigFloat {
        let g = self.gamma_with(i.n, lam, i.u);
        big(i.u).mul(&big(i.s_norm.unwrap()), P, RM).mul(lam, P, RM).mul(&big(1.0).add(&g, P, RM), P, RM)
    }

    pub fn thm41(&self, i: &BoundInputs<f64>) -> BigFloat {
        self.thm41_with(i, &self.lambda_big(i.failure_prob, i.n - 1))
    }

    fn thm41_with(&self, i: &BoundInputs<f64>, lam: &BigFloat) -> BigFloat {
        let g = self.geometric_big(&self.kappa_with(i.n, lam, i.u), i.n);
        g.mul(lam, P, RM).mul(&big(i.s_norm.unwrap()), P, RM).mul(&big(i.u), P, RM)
    }

    fn data_term(&self, i: &BoundInputs<f64>, lam: &BigFloat) -> BigFloat {
        let nb = int(i.n);
        let mean = lam.mul(&big(i.mu_x.abs()), P, RM).mul(&nb.mul(&nb.sqrt(P, RM), P, RM), P, RM);
        let spread = lam.mul(lam, P, RM).mul(&big(i.c_x), P, RM).mul(&nb, P, RM);
        mean.add(&spread, P, RM)
    }

    pub fn thm51(&self, i: &BoundInputs<f64>) -> BigFloat {
        self.thm51_with(i, &self.lambda_big(i.failure_prob, i.n))
    }

    fn thm51_with(&self, i: &BoundInputs<f64>, lam: &BigFloat) -> BigFloat {
        let g = self.geometric_big(&self.kappa_with(i.n, lam, i.u), i.n);
        g.mul(&self.data_term(i, lam), P, RM).mul(&big(i.u), P, RM)
    }

    pub fn thm52(&self, i: &BoundInputs<f64>) -> BigFloat {
        self.thm52_with(i, &self.lambda_big(i.failure_prob, 3))
    }

    fn thm52_with(&self, i: &BoundInputs<f64>, lam: &BigFloat) -> BigFloat {
        let g = self.gamma_with(i.n, lam, i.u);
        big(1.0).add(&g, P, RM).mul(&self.data_term(i, lam), P, RM).mul(&big(i.u), P, RM)
    }

    /// Records the relative error of `got` against `want`.
    pub fn check(&mut self, label: &str, got: f64, want: BigFloat) {
        let want = to_f64(&want);
        self.checked += 1;
        let rel = if want.is_infinite() {
            if got.is_infinite() { 0.0 } else { f64::INFINITY }
        } else if want == 0.0 {
            got.abs()
        } else {
            ((got - want) / want).abs()
        };
        if !(rel <= self.worst) {
            self.worst = rel;
            self.worst_label = format!("{label}: got {got:e}, want {want:e}");
        }
    }

    pub fn finish(&self) {
        assert!(self.worst <= REL_TOL, "worst relative error {:e} at {}", self.worst, self.worst_label);
    }
}

pub struct SweepReport {
    pub tuples: usize,
    pub checked: usize,
    pub worst: f64,
    pub worst_label: String,
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} tuples, {} comparisons, worst relative error {:.3e} ({})",
            self.tuples, self.checked, self.worst, self.worst_label
        )
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Evaluates every formula on `tuples` random parameter sets.
pub fn sweep(tuples: usize, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut o = Oracle::new();
    let units = [2f64.powi(-8), 2f64.powi(-11), 2f64.powi(-24), 2f64.powi(-53)];
    for t in 0..tuples {
        let n = log_uniform(&mut rng, 2.0, 1e7).round().max(2.0) as usize;
        let u = if t % 2 == 0 { units[rng.random_range(0..units.len())] } else { log_uniform(&mut rng, 1e-17, 1e-2) };
        let delta = log_uniform(&mut rng, 1e-16, 0.9);
        let mu = rng.random_range(-2.0..2.0);
        let c = rng.random_range(0.0..3.0);
        let s = log_uniform(&mut rng, 1e-3, 1e7);
        let tag = format!("n={n} u={u:e} delta={delta:e} mu={mu} c={c} s={s:e}");

        let lam1 = o.lambda_big(delta, 1);
        let lam2 = o.lambda_big(delta, 2);
        let lam3 = o.lambda_big(delta, 3);
        let lam_prev = o.lambda_big(delta, n - 1);
        let lam_n = o.lambda_big(delta, n);

        o.check(&format!("lambda {tag}"), lambda(delta).unwrap(), lam1.clone());
        let want = o.gamma_with(n, &lam1, u);
        o.check(&format!("gamma_tilde {tag}"), gamma_tilde(n, delta, u).unwrap(), want);
        let want = o.kappa_with(n, &lam_prev, u);
        o.check(&format!("kappa {tag}"), kappa(n, delta, u).unwrap(), want);
        let k = if t % 3 == 0 { 1.0 + rng.random_range(-2e-6..2e-6) } else { rng.random_range(0.0..2.0) };
        let want = o.geometric(k, n);
        o.check(&format!("geometric k={k:e} {tag}"), geometric_factor(k, n), want);
        let want = o.sbound_with(n, &lam_n, mu, c);
        o.check(&format!("sbound {tag}"), sbound(n, delta, mu, c).unwrap(), want);

        let inputs = BoundInputs::new(n, u, delta).with_data(mu, c).with_norm(s);
        let want = o.thm33_with(&inputs, &lam2);
        o.check(&format!("thm33 {tag}"), bound_thm33(&inputs).unwrap().value, want);
        let want = o.thm41_with(&inputs, &lam_prev);
        o.check(&format!("thm41 {tag}"), bound_thm41(&inputs).unwrap().value, want);
        let want = o.thm51_with(&inputs, &lam_n);
        o.check(&format!("thm51 {tag}"), bound_thm51(&inputs).unwrap().value, want);
        let want = o.thm52_with(&inputs, &lam3);
        o.check(&format!("thm52 {tag}"), bound_thm52(&inputs).unwrap().value, want);
    }
    SweepReport { tuples, checked: o.checked, worst: o.worst, worst_label: o.worst_label }
}
