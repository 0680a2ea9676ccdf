use num_complex::Complex64;

use crate::ir::GateKind;

type Mat2 = [[Complex64; 2]; 2];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn one_qubit_matrix(kind: GateKind, params: &[f64]) -> Option<Mat2> {
    use std::f64::consts::FRAC_1_SQRT_2 as R;
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    Some(match kind {
        GateKind::H => [[c(R, 0.0), c(R, 0.0)], [c(R, 0.0), c(-R, 0.0)]],
        GateKind::X => [[z, o], [o, z]],
        GateKind::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        GateKind::Z => [[o, z], [z, c(-1.0, 0.0)]],
        GateKind::S => [[o, z], [z, c(0.0, 1.0)]],
        GateKind::Sdg => [[o, z], [z, c(0.0, -1.0)]],
        GateKind::T => [[o, z], [z, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]],
        GateKind::Tdg => [[o, z], [z, Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4)]],
        GateKind::Rx => {
            let (s, co) = (params[0] / 2.0).sin_cos();
            [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
        }
        GateKind::Ry => {
            let (s, co) = (params[0] / 2.0).sin_cos();
            [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
        }
        GateKind::Rz => {
            let h = params[0] / 2.0;
            [[Complex64::from_polar(1.0, -h), z], [z, Complex64::from_polar(1.0, h)]]
        }
        _ => return None,
    })
}

/// Dense statevector over `n` qubits; qubit 0 is the least-significant
/// amplitude index bit.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Appends a qubit in state `|bit⟩` as the new most-significant qubit.
    pub fn push_qubit(&mut self, bit: bool) -> usize {
        let len = self.amps.len();
        let zero = Complex64::new(0.0, 0.0);
        if bit {
            let mut amps = vec![zero; len];
            amps.append(&mut self.amps);
            self.amps = amps;
        } else {
            self.amps.resize(2 * len, zero);
        }
        self.n += 1;
        self.n - 1
    }

    /// Removes qubit `q`, which must be in basis state `|bit⟩`. Higher qubits
    /// shift down by one.
    pub fn remove_qubit(&mut self, q: usize, bit: bool) {
        let low = (1usize << q) - 1;
        let half = self.amps.len() / 2;
        let b = usize::from(bit) << q;
        let mut out = Vec::with_capacity(half);
        for j in 0..half {
            let idx = (j & low) | ((j & !low) << 1) | b;
            out.push(self.amps[idx]);
        }
        self.amps = out;
        self.n -= 1;
    }

    fn apply_mat(&mut self, target: usize, m: &Mat2, cmask: usize, cval: usize) {
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit != 0 || i & cmask != cval {
                continue;
            }
            let j = i | bit;
            let (a0, a1) = (self.amps[i], self.amps[j]);
            self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    fn apply_diag(&mut self, f: impl Fn(usize) -> Option<Complex64>, cmask: usize, cval: usize) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & cmask != cval {
                continue;
            }
            if let Some(ph) = f(i) {
                *a *= ph;
            }
        }
    }

    /// Applies `kind` to `qubits` on the subspace where the bits in `cmask`
    /// equal `cval`. Pass `cmask = 0` for an uncontrolled gate.
    pub fn apply_controlled(&mut self, kind: GateKind, params: &[f64], qubits: &[usize], cmask: usize, cval: usize) {
        let bit = |q: usize| 1usize << q;
        let x = one_qubit_matrix(GateKind::X, &[]).expect("x");
        match kind {
            GateKind::Cx => self.apply_mat(qubits[1], &x, cmask | bit(qubits[0]), cval | bit(qubits[0])),
            GateKind::Ccx => {
                let m = bit(qubits[0]) | bit(qubits[1]);
                self.apply_mat(qubits[2], &x, cmask | m, cval | m);
            }
            GateKind::Cz => {
                let m = bit(qubits[0]) | bit(qubits[1]);
                self.apply_diag(|i| (i & m == m).then_some(Complex64::new(-1.0, 0.0)), cmask, cval);
            }
            GateKind::Rzz => {
                let (a, b) = (bit(qubits[0]), bit(qubits[1]));
                let h = params[0] / 2.0;
                let even = Complex64::from_polar(1.0, -h);
                let odd = Complex64::from_polar(1.0, h);
                self.apply_diag(|i| Some(if (i & a != 0) ^ (i & b != 0) { odd } else { even }), cmask, cval);
            }
            GateKind::Swap => {
                let (a, b) = (qubits[0], qubits[1]);
                self.apply_mat(b, &x, cmask | bit(a), cval | bit(a));
                self.apply_mat(a, &x, cmask | bit(b), cval | bit(b));
                self.apply_mat(b, &x, cmask | bit(a), cval | bit(a));
            }
            k => {
                let m = one_qubit_matrix(k, params).expect("single-qubit gate");
                self.apply_mat(qubits[0], &m, cmask, cval);
            }
        }
    }

    pub fn apply(&mut self, kind: GateKind, params: &[f64], qubits: &[usize]) {
        self.apply_controlled(kind, params, qubits, 0, 0);
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let bit = 1usize << q;
        self.amps.iter().enumerate().filter(|(i, _)| i & bit != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.amps.iter_mut() {
            *a *= factor;
        }
    }

    /// Projects qubit `q` onto `outcome` and renormalizes; `prob` is the
    /// probability of that outcome.
    pub fn collapse(&mut self, q: usize, outcome: bool, prob: f64) {
        let bit = 1usize << q;
        let scale = 1.0 / prob.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & bit != 0) == outcome {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &StateVector, b: &StateVector, tol: f64) -> bool {
        a.amps.iter().zip(&b.amps).all(|(x, y)| (x - y).norm() <= tol)
    }

    fn scrambled(n: usize) -> StateVector {
        let mut s = StateVector::zero(n);
        for q in 0..n {
            s.apply(GateKind::H, &[], &[q]);
            s.apply(GateKind::T, &[], &[q]);
            s.apply(GateKind::Ry, &[0.3 + q as f64], &[q]);
        }
        if n > 1 {
            s.apply(GateKind::Cx, &[], &[0, 1]);
        }
        s
    }

    #[test]
    fn gate_then_inverse_restores_state() {
        type Case = (GateKind, Vec<f64>, GateKind, Vec<f64>, Vec<usize>);
        let cases: Vec<Case> = vec![
            (GateKind::X, vec![], GateKind::X, vec![], vec![0]),
            (GateKind::H, vec![], GateKind::H, vec![], vec![1]),
            (GateKind::Cx, vec![], GateKind::Cx, vec![], vec![0, 2]),
            (GateKind::Rz, vec![0.7], GateKind::Rz, vec![-0.7], vec![2]),
            (GateKind::S, vec![], GateKind::Sdg, vec![], vec![0]),
            (GateKind::T, vec![], GateKind::Tdg, vec![], vec![1]),
            (GateKind::Rzz, vec![1.1], GateKind::Rzz, vec![-1.1], vec![0, 1]),
            (GateKind::Swap, vec![], GateKind::Swap, vec![], vec![1, 2]),
            (GateKind::Ccx, vec![], GateKind::Ccx, vec![], vec![0, 1, 2]),
        ];
        for (g, gp, inv, ip, qs) in cases {
            let start = scrambled(3);
            let mut s = start.clone();
            s.apply(g, &gp, &qs);
            s.apply(inv, &ip, &qs);
            assert!(close(&s, &start, 1e-12), "{g:?}");
        }
    }

    #[test]
    fn bell_state_probabilities() {
        let mut s = StateVector::zero(2);
        s.apply(GateKind::H, &[], &[0]);
        s.apply(GateKind::Cx, &[], &[0, 1]);
        let p = s.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[3] - 0.5).abs() < 1e-15);
        assert!(p[1].abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn normalization_drift_is_small() {
        let mut s = StateVector::zero(4);
        let kinds = [GateKind::H, GateKind::T, GateKind::Rx, GateKind::Cx, GateKind::Rzz, GateKind::Ry];
        for i in 0..1000 {
            let k = kinds[i % kinds.len()];
            let qs: Vec<usize> = (0..k.arity()).map(|j| (i + j) % 4).collect();
            let params = if k.is_rotation() { vec![0.1 * i as f64] } else { vec![] };
            s.apply(k, &params, &qs);
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn push_and_remove_qubit() {
        let mut s = StateVector::zero(1);
        s.apply(GateKind::H, &[], &[0]);
        let q = s.push_qubit(true);
        assert_eq!(q, 1);
        assert!((s.prob_one(1) - 1.0).abs() < 1e-15);
        s.remove_qubit(1, true);
        let mut expect = StateVector::zero(1);
        expect.apply(GateKind::H, &[], &[0]);
        assert!(close(&s, &expect, 1e-15));
    }

    #[test]
    fn controlled_x_only_acts_on_matching_subspace() {
        let mut s = StateVector::zero(3);
        s.apply(GateKind::X, &[], &[1]);
        // control on q1 == 1 and q2 == 0
        s.apply_controlled(GateKind::X, &[], &[0], 0b110, 0b010);
        assert!((s.prob_one(0) - 1.0).abs() < 1e-15);
        s.apply_controlled(GateKind::X, &[], &[0], 0b110, 0b110);
        assert!((s.prob_one(0) - 1.0).abs() < 1e-15);
    }
}
