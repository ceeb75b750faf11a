//! Weight-lattice combinatorics for A_{n-1}: states a in P stored in the
//! eps-bar basis modulo the all-ones vector, the pairing table, Dynkin
//! labels, the sigma rotation and admissibility.

use num_rational::Rational64;

use crate::error::{Error, Result};

/// A weight written as sum_mu c_mu eps-bar_mu with rational coefficients.
/// Two coordinate vectors differing by a multiple of (1,...,1) describe the
/// same weight. Integer-coordinate weights are the lattice P; the correlation
/// pipeline also uses generic (non-integer) weights.
#[derive(Clone, Debug)]
pub struct WeightVec {
    pub coords: Vec<Rational64>,
}

impl WeightVec {
    pub fn new(coords: Vec<Rational64>) -> Self {
        WeightVec { coords }
    }

    pub fn zero(n: usize) -> Self {
        WeightVec { coords: vec![Rational64::from_integer(0); n] }
    }

    pub fn from_ints(coords: &[i64]) -> Self {
        WeightVec { coords: coords.iter().map(|&c| Rational64::from_integer(c)).collect() }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// eps-bar_mu as a weight.
    pub fn eps_bar(n: usize, mu: usize) -> Self {
        let mut w = WeightVec::zero(n);
        w.coords[mu] = Rational64::from_integer(1);
        w
    }

    /// Fundamental weight omega_mu = eps-bar_0 + ... + eps-bar_{mu-1};
    /// omega_0 is the zero weight and the index is taken mod n.
    pub fn omega(n: usize, mu: i64) -> Self {
        let mu = mu.rem_euclid(n as i64) as usize;
        let mut w = WeightVec::zero(n);
        for c in w.coords.iter_mut().take(mu) {
            *c = Rational64::from_integer(1);
        }
        w
    }

    /// Simple root alpha_mu = eps-bar_{mu-1} - eps-bar_mu, 1 <= mu <= n-1.
    pub fn alpha(n: usize, mu: usize) -> Self {
        assert!((1..n).contains(&mu), "alpha index out of range");
        let mut w = WeightVec::zero(n);
        w.coords[mu - 1] = Rational64::from_integer(1);
        w.coords[mu] = Rational64::from_integer(-1);
        w
    }

    /// rho = sum of the fundamental weights; coords (n-1, n-2, ..., 0).
    pub fn rho(n: usize) -> Self {
        WeightVec {
            coords: (0..n).map(|mu| Rational64::from_integer((n - 1 - mu) as i64)).collect(),
        }
    }

    pub fn add(&self, other: &WeightVec) -> WeightVec {
        WeightVec {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &WeightVec) -> WeightVec {
        WeightVec {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: Rational64) -> WeightVec {
        WeightVec { coords: self.coords.iter().map(|c| c * s).collect() }
    }

    /// <self, other> extended bilinearly from <eps-bar_mu, eps-bar_nu> =
    /// delta_{mu nu} - 1/n. Well defined on classes mod (1,...,1).
    pub fn inner(&self, other: &WeightVec) -> Rational64 {
        let n = self.n() as i64;
        let dot: Rational64 = self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum();
        let sa: Rational64 = self.coords.iter().sum();
        let sb: Rational64 = other.coords.iter().sum();
        dot - sa * sb / Rational64::from_integer(n)
    }

    /// <self, eps_mu - eps_nu> = c_mu - c_nu: the coordinate difference,
    /// independent of the representative.
    pub fn coord_diff(&self, mu: usize, nu: usize) -> Rational64 {
        self.coords[mu] - self.coords[nu]
    }

    /// Finite Dynkin labels k^mu = <self, alpha_mu> for mu = 1..n-1.
    pub fn finite_labels(&self) -> Vec<Rational64> {
        (1..self.n()).map(|mu| self.coords[mu - 1] - self.coords[mu]).collect()
    }

    /// sigma rotation at the given level: the affine Dynkin labels
    /// (k^0, ..., k^{n-1}) with k^0 = level - sum(finite) are cyclically
    /// shifted by `steps` (k^mu -> k^{mu-steps}), and the result is rebuilt
    /// from its finite labels.
    pub fn sigma(&self, steps: i64, level: Rational64) -> WeightVec {
        let n = self.n();
        let finite = self.finite_labels();
        let total: Rational64 = finite.iter().sum();
        let mut labels = Vec::with_capacity(n);
        labels.push(level - total);
        labels.extend(finite);
        let shifted: Vec<Rational64> =
            (0..n).map(|mu| labels[(mu as i64 - steps).rem_euclid(n as i64) as usize]).collect();
        let mut w = WeightVec::zero(n);
        for (mu, label) in shifted.iter().enumerate().skip(1) {
            w = w.add(&WeightVec::omega(n, mu as i64).scale(*label));
        }
        w
    }

    /// True when the difference from `other` is an integer multiple of the
    /// all-ones vector plus an integer vector (i.e. both describe weights in
    /// the same coset representation).
    pub fn same_class(&self, other: &WeightVec) -> bool {
        let d0 = self.coords[0] - other.coords[0];
        self.coords
            .iter()
            .zip(&other.coords)
            .all(|(a, b)| a - b == d0)
    }
}

impl PartialEq for WeightVec {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.same_class(other)
    }
}

impl Eq for WeightVec {}

/// A point of the weight lattice P (integer coordinates).
#[derive(Clone, Debug)]
pub struct WeightState {
    pub coords: Vec<i64>,
}

impl WeightState {
    pub fn new(coords: Vec<i64>) -> Self {
        WeightState { coords }
    }

    pub fn zero(n: usize) -> Self {
        WeightState { coords: vec![0; n] }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vec(&self) -> WeightVec {
        WeightVec::from_ints(&self.coords)
    }

    pub fn add_eps_bar(&self, mu: usize) -> WeightState {
        let mut c = self.coords.clone();
        c[mu] += 1;
        WeightState { coords: c }
    }

    pub fn sub_eps_bar(&self, mu: usize) -> WeightState {
        let mut c = self.coords.clone();
        c[mu] -= 1;
        WeightState { coords: c }
    }

    /// a-bar_mu = <a + rho, eps_mu>, a rational with denominator n.
    pub fn abar(&self, mu: usize) -> Rational64 {
        let n = self.n();
        let rho = WeightVec::rho(n);
        let apr = self.to_vec().add(&rho);
        let total: Rational64 = apr.coords.iter().sum();
        apr.coords[mu] - total / Rational64::from_integer(n as i64)
    }

    /// a_{mu nu} = a-bar_mu - a-bar_nu, an integer.
    pub fn a_diff(&self, mu: usize, nu: usize) -> i64 {
        let n = self.n() as i64;
        (self.coords[mu] + n - 1 - mu as i64) - (self.coords[nu] + n - 1 - nu as i64)
    }

    /// Finite Dynkin labels of a + rho: k^mu = a_{mu-1, mu} for mu = 1..n-1.
    pub fn dynkin_finite(&self) -> Vec<i64> {
        (1..self.n()).map(|mu| self.a_diff(mu - 1, mu)).collect()
    }

    /// Affine Dynkin labels at integer level (k^0 completes the sum).
    pub fn dynkin(&self, level: i64) -> DynkinLabels {
        let finite = self.dynkin_finite();
        let total: i64 = finite.iter().sum();
        let mut k = Vec::with_capacity(self.n());
        k.push(level - total);
        k.extend(finite);
        DynkinLabels { k }
    }

    /// sigma rotation of a + rho at integer level: returns the state a' with
    /// a' + rho = sigma(a + rho).
    pub fn sigma(&self, steps: i64, level: i64) -> WeightState {
        let n = self.n();
        let rho = WeightVec::rho(n);
        let rotated = self.to_vec().add(&rho).sigma(steps, Rational64::from_integer(level));
        let v = rotated.sub(&rho);
        // integer-level rotations of integer states stay integral
        WeightState {
            coords: v
                .coords
                .iter()
                .map(|c| {
                    debug_assert!(c.is_integer());
                    c.to_integer()
                })
                .collect(),
        }
    }
}

impl PartialEq for WeightState {
    fn eq(&self, other: &Self) -> bool {
        if self.n() != other.n() {
            return false;
        }
        let d = self.coords[0] - other.coords[0];
        self.coords.iter().zip(&other.coords).all(|(a, b)| a - b == d)
    }
}

impl Eq for WeightState {}

/// Dynkin labels (k^0, ..., k^{n-1}) of some a + rho.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynkinLabels {
    pub k: Vec<i64>,
}

impl DynkinLabels {
    pub fn level(&self) -> i64 {
        self.k.iter().sum()
    }

    pub fn sigma(&self, steps: i64) -> DynkinLabels {
        let n = self.k.len() as i64;
        DynkinLabels {
            k: (0..n).map(|mu| self.k[(mu - steps).rem_euclid(n) as usize]).collect(),
        }
    }
}

/// (a, b) is admissible when b = a + eps-bar_mu for some mu; returns that mu.
pub fn admissible_step(a: &WeightState, b: &WeightState) -> Option<usize> {
    if a.n() != b.n() {
        return None;
    }
    let n = a.n();
    for mu in 0..n {
        if *b == a.add_eps_bar(mu) {
            return Some(mu);
        }
    }
    None
}

pub fn admissible(a: &WeightState, b: &WeightState) -> bool {
    admissible_step(a, b).is_some()
}

/// The scalar by which pi_{mu nu} acts on the (l, k) sector:
/// <eps_mu - eps_nu, r l - (r-1) k>.
pub fn pi_scalar(l: &WeightVec, k: &WeightVec, mu: usize, nu: usize, r: Rational64) -> Rational64 {
    r * l.coord_diff(mu, nu) - (r - Rational64::from_integer(1)) * k.coord_diff(mu, nu)
}

/// Restricted-membership test: a is in P_{r-n} when all labels of a + rho at
/// level r are strictly positive integers (only meaningful for integer r).
pub fn in_restricted(a: &WeightState, r: i64) -> Result<bool> {
    let n = a.n() as i64;
    if r < n {
        return Err(Error::Config(format!("restricted test needs r >= n, got r={r}, n={n}")));
    }
    Ok(a.dynkin(r).k.iter().all(|&k| k > 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abar_of_zero_state_is_rho_pairing() {
        // a = 0 so a + rho = rho; n = 3: a_{01} = 1, a_{02} = 2
        let a = WeightState::zero(3);
        assert_eq!(a.a_diff(0, 1), 1);
        assert_eq!(a.a_diff(0, 2), 2);
        assert_eq!(a.a_diff(1, 1), 0);
        assert_eq!(a.a_diff(2, 0), -2);
    }

    #[test]
    fn a_diff_matches_abar_and_is_cocycle() {
        let a = WeightState::new(vec![3, -1, 2, 0]);
        for mu in 0..4 {
            for nu in 0..4 {
                let d = a.abar(mu) - a.abar(nu);
                assert_eq!(d, Rational64::from_integer(a.a_diff(mu, nu)));
                for lam in 0..4 {
                    assert_eq!(a.a_diff(mu, nu) + a.a_diff(nu, lam), a.a_diff(mu, lam));
                }
            }
        }
    }

    #[test]
    fn inner_product_table() {
        let n = 3;
        let w1 = WeightVec::omega(n, 1);
        assert_eq!(w1.inner(&w1), Rational64::new(2, 3));
        let n = 4;
        for mu in 1..n {
            for nu in 1..n {
                let a = WeightVec::alpha(n, mu);
                let w = WeightVec::omega(n, nu as i64);
                let expect = Rational64::from_integer(if mu == nu { 1 } else { 0 });
                assert_eq!(a.inner(&w), expect, "alpha_{mu} . omega_{nu}");
            }
        }
        // <omega_mu, omega_nu> = min(mu,nu) - mu nu / n
        for mu in 1..n {
            for nu in 1..n {
                let w1 = WeightVec::omega(n, mu as i64);
                let w2 = WeightVec::omega(n, nu as i64);
                let expect = Rational64::from_integer(mu.min(nu) as i64)
                    - Rational64::new((mu * nu) as i64, n as i64);
                assert_eq!(w1.inner(&w2), expect);
            }
        }
    }

    #[test]
    fn norm_identity_from_coordinate_differences() {
        // <a+rho, a+rho> = (1/n) sum_{mu<nu} a_{mu nu}^2 over random states
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 3;
        for _ in 0..20 {
            let a = WeightState::new((0..n).map(|_| rng.gen_range(-5i64..6)).collect());
            let apr = a.to_vec().add(&WeightVec::rho(n));
            let lhs = apr.inner(&apr);
            let mut sum = 0i64;
            for mu in 0..n {
                for nu in mu + 1..n {
                    sum += a.a_diff(mu, nu) * a.a_diff(mu, nu);
                }
            }
            assert_eq!(lhs, Rational64::new(sum, n as i64));
        }
    }

    #[test]
    fn representation_independence() {
        let a = WeightState::new(vec![2, 0, 1]);
        let b = WeightState::new(vec![5, 3, 4]); // same class
        assert_eq!(a, b);
        assert_eq!(a.a_diff(0, 2), b.a_diff(0, 2));
        assert_eq!(a.dynkin_finite(), b.dynkin_finite());
        assert!(admissible(&a, &b.add_eps_bar(1)));
    }

    #[test]
    fn sigma_cycles_and_fixes_level() {
        let n = 3;
        let a = WeightState::new(vec![2, 0, 1]);
        let level = 7;
        let mut cur = a.clone();
        for _ in 0..n {
            cur = cur.sigma(1, level);
            assert_eq!(cur.dynkin(level).level(), level);
        }
        assert_eq!(cur, a);
        // sigma(omega_1) = omega_2 at n=3, level 1
        let w1 = WeightVec::omega(n, 1);
        let rot = w1.sigma(1, Rational64::from_integer(1));
        assert_eq!(rot, WeightVec::omega(n, 2));
        // sigma(omega_{n-1}) = omega_n = 0
        let wn1 = WeightVec::omega(n, (n - 1) as i64);
        let rot = wn1.sigma(1, Rational64::from_integer(1));
        assert_eq!(rot, WeightVec::zero(n));
    }

    #[test]
    fn admissibility() {
        let a = WeightState::new(vec![1, 4, 2]);
        assert!(admissible(&a, &a.add_eps_bar(0)));
        assert_eq!(admissible_step(&a, &a.add_eps_bar(2)), Some(2));
        let two_steps = a.add_eps_bar(0).add_eps_bar(1);
        assert!(!admissible(&a, &two_steps));
        assert!(!admissible(&a, &a));
    }

    #[test]
    fn pi_scalar_reduces_to_a_diff_when_l_equals_k() {
        let n = 3;
        let a = WeightState::new(vec![2, -1, 0]);
        let k = a.to_vec().add(&WeightVec::rho(n));
        let r = Rational64::new(9, 2);
        for mu in 0..n {
            for nu in 0..n {
                let p = pi_scalar(&k, &k, mu, nu, r);
                assert_eq!(p, Rational64::from_integer(a.a_diff(mu, nu)));
            }
        }
    }

    #[test]
    fn restricted_membership() {
        // a = 0: labels of rho at level r are (r-n+1, 1, ..., 1)
        let a = WeightState::zero(3);
        assert!(in_restricted(&a, 4).unwrap());
        assert!(in_restricted(&a, 3).unwrap());
        assert!(in_restricted(&a, 2).is_err());
        // a + rho with a zero label sits on a wall for every level
        let wall = WeightState::new(vec![0, 1, 0]);
        assert!(!in_restricted(&wall, 5).unwrap());
    }
}
