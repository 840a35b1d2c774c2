//! Composite Hilbert space of the exciton-vibration dimer: operators, the
//! full Hamiltonian and its eigendecomposition.
//!
//! Basis ordering is fixed as exciton-major, then mode 1, then mode 2: the
//! flattened index of `|E_d, n1, n2>` is `(d-1)*(M+1)^2 + n1*(M+1) + n2`,
//! with `d = 1` the lower exciton. All operators are built in this local
//! exciton-product basis by Kronecker products.

use ndarray::{linalg::kron, Array1, Array2};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest composite dimension the dense machinery will accept.
pub const MAX_HILBERT_DIM: usize = 4096;

/// Physical parameters of the dimer model. Energies in cm⁻¹, rates in ps⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimerParams<R> {
    /// Site energy gap Δe = e2 − e1.
    pub delta_e: R,
    /// Electronic coupling V (real, non-negative).
    pub v: R,
    /// Mode frequencies.
    pub omega1: R,
    pub omega2: R,
    /// Exciton-vibration couplings.
    pub g1: R,
    pub g2: R,
    /// Thermal energy k_B·T in cm⁻¹.
    pub kbt: R,
    /// Mode relaxation rate.
    pub gamma_th: R,
    /// Electronic pure-dephasing rate.
    pub gamma_deph: R,
    /// Fock truncation: levels 0..=M per mode.
    pub m_levels: usize,
}

impl<R: Scalar> DimerParams<R> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("delta_e", self.delta_e),
            ("v", self.v),
            ("g1", self.g1),
            ("g2", self.g2),
            ("gamma_th", self.gamma_th),
            ("gamma_deph", self.gamma_deph),
        ];
        for (name, x) in nonneg {
            if !(x >= R::zero()) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {x}")));
            }
        }
        let positive = [("omega1", self.omega1), ("omega2", self.omega2), ("kbt", self.kbt)];
        for (name, x) in positive {
            if !(x > R::zero()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {x}")));
            }
        }
        if self.m_levels < 1 {
            return Err(Error::InvalidParams("m_levels must be at least 1".into()));
        }
        if self.dim() > MAX_HILBERT_DIM {
            return Err(Error::DimensionOverflow { dim: self.dim(), max: MAX_HILBERT_DIM });
        }
        Ok(())
    }

    /// Fock levels per mode, M + 1.
    pub fn fock_dim(&self) -> usize {
        self.m_levels + 1
    }

    /// Composite dimension 2·(M+1)².
    pub fn dim(&self) -> usize {
        2 * self.fock_dim() * self.fock_dim()
    }

    pub fn with_m_levels(&self, m_levels: usize) -> Self {
        Self { m_levels, ..self.clone() }
    }
}

/// Label of one local exciton-product basis vector `|E_d, n1, n2>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisLabel {
    /// Exciton index, 1 (lower) or 2 (upper).
    pub exciton_index: u8,
    pub n1: usize,
    pub n2: usize,
}

impl BasisLabel {
    pub fn flatten(&self, m_levels: usize) -> usize {
        let f = m_levels + 1;
        (self.exciton_index as usize - 1) * f * f + self.n1 * f + self.n2
    }

    pub fn unflatten(index: usize, m_levels: usize) -> Self {
        let f = m_levels + 1;
        BasisLabel {
            exciton_index: (index / (f * f)) as u8 + 1,
            n1: (index / f) % f,
            n2: index % f,
        }
    }
}

/// Which basis a matrix's rows/columns refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    LocalExcitonProduct,
    SystemEigen,
}

/// Dense complex matrix on the composite space, tagged with its basis.
#[derive(Debug, Clone)]
pub struct Operator<R: Scalar> {
    pub matrix: Array2<Complex<R>>,
    pub basis: BasisTag,
}

impl<R: Scalar> Operator<R> {
    pub fn new(matrix: Array2<Complex<R>>, basis: BasisTag) -> Self {
        debug_assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix, basis }
    }

    pub fn from_real(matrix: Array2<R>, basis: BasisTag) -> Self {
        Self::new(matrix.mapv(|x| Complex::new(x, R::zero())), basis)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self::new(self.matrix.t().mapv(|z| z.conj()), self.basis)
    }

    /// Max-norm deviation from Hermiticity.
    pub fn herm_deviation(&self) -> R {
        let mut dev = R::zero();
        let a = &self.matrix;
        for i in 0..a.nrows() {
            for j in i..a.ncols() {
                let d = (a[[i, j]] - a[[j, i]].conj()).norm();
                if d > dev {
                    dev = d;
                }
            }
        }
        dev
    }

    pub fn max_abs(&self) -> R {
        self.matrix.iter().map(|z| z.norm()).fold(R::zero(), R::max)
    }

    pub fn check_basis(&self, expected: BasisTag) -> Result<()> {
        if self.basis != expected {
            return Err(Error::BasisMismatch { expected, found: self.basis });
        }
        Ok(())
    }
}

/// The operator set used throughout the analysis, in the local
/// exciton-product basis.
#[derive(Debug, Clone)]
pub struct OperatorSet<R: Scalar> {
    pub b1: Operator<R>,
    pub b1_dag: Operator<R>,
    pub b2: Operator<R>,
    pub b2_dag: Operator<R>,
    /// Position quadratures X_i = b_i + b_i†.
    pub x1: Operator<R>,
    pub x2: Operator<R>,
    /// Site projectors rotated to the exciton basis.
    pub theta1: Operator<R>,
    pub theta2: Operator<R>,
    /// Inter-exciton coherence operator |E1><E2| + |E2><E1|.
    pub sigma_x: Operator<R>,
    /// Joint vibrational ground-state projector |0,0><0,0| on the modes.
    pub p00: Operator<R>,
    /// Exciton population projectors.
    pub pop_e1: Operator<R>,
    pub pop_e2: Operator<R>,
}

/// Mixing angle θ = ½·arctan(2V/Δe); π/4 at Δe = 0.
pub fn mixing_angle<R: Scalar>(params: &DimerParams<R>) -> R {
    if params.delta_e == R::zero() {
        return R::FRAC_PI_4();
    }
    let two = R::of(2.0);
    ((two * params.v / params.delta_e).atan()) / two
}

/// Exciton splitting ΔE = √(Δe² + 4V²).
pub fn exciton_splitting<R: Scalar>(params: &DimerParams<R>) -> R {
    let two = R::of(2.0);
    (params.delta_e * params.delta_e + two * two * params.v * params.v).sqrt()
}

/// Exciton energies with the zero of energy at the site mean, (−ΔE/2, +ΔE/2).
pub fn exciton_energies<R: Scalar>(params: &DimerParams<R>) -> (R, R) {
    let half = R::of(0.5);
    let de = exciton_splitting(params);
    (-half * de, half * de)
}

fn identity<R: Scalar>(n: usize) -> Array2<Complex<R>> {
    Array2::eye(n).mapv(|x: R| Complex::new(x, R::zero()))
}

/// Truncated lowering operator, <n-1|b|n> = √n.
fn lowering<R: Scalar>(fock_dim: usize) -> Array2<Complex<R>> {
    let mut b = Array2::zeros((fock_dim, fock_dim));
    for n in 1..fock_dim {
        b[[n - 1, n]] = Complex::new(R::of(n as f64).sqrt(), R::zero());
    }
    b
}

/// Site projectors in the exciton basis (2×2 blocks of Θ_i).
fn theta_blocks<R: Scalar>(params: &DimerParams<R>) -> (Array2<Complex<R>>, Array2<Complex<R>>) {
    let theta = mixing_angle(params);
    let (c, s) = (theta.cos(), theta.sin());
    let re = |x: R| Complex::new(x, R::zero());
    let t1 = ndarray::array![[re(c * c), re(-c * s)], [re(-c * s), re(s * s)]];
    let t2 = ndarray::array![[re(s * s), re(c * s)], [re(c * s), re(c * c)]];
    (t1, t2)
}

/// All named operators on the composite space.
pub fn build_operators<R: Scalar>(params: &DimerParams<R>) -> Result<OperatorSet<R>> {
    params.validate()?;
    let f = params.fock_dim();
    let i_el = identity::<R>(2);
    let i_m = identity::<R>(f);
    let i_mm = identity::<R>(f * f);
    let b = lowering::<R>(f);
    let bd = b.t().mapv(|z| z.conj());
    let x = &b + &bd;

    let local = |m: Array2<Complex<R>>| Operator::new(m, BasisTag::LocalExcitonProduct);
    let mode1 = |op: &Array2<Complex<R>>| kron(&i_el, &kron(op, &i_m));
    let mode2 = |op: &Array2<Complex<R>>| kron(&i_el, &kron(&i_m, op));

    let (t1, t2) = theta_blocks(params);
    let re = |x: R| Complex::new(x, R::zero());
    let sx = ndarray::array![[re(R::zero()), re(R::one())], [re(R::one()), re(R::zero())]];
    let e1 = ndarray::array![[re(R::one()), re(R::zero())], [re(R::zero()), re(R::zero())]];
    let e2 = ndarray::array![[re(R::zero()), re(R::zero())], [re(R::zero()), re(R::one())]];

    let mut vac = Array2::zeros((f, f));
    vac[[0, 0]] = re(R::one());
    let p00 = kron(&i_el, &kron(&vac.clone(), &vac));

    Ok(OperatorSet {
        b1: local(mode1(&b)),
        b1_dag: local(mode1(&bd)),
        b2: local(mode2(&b)),
        b2_dag: local(mode2(&bd)),
        x1: local(mode1(&x)),
        x2: local(mode2(&x)),
        theta1: local(kron(&t1, &i_mm)),
        theta2: local(kron(&t2, &i_mm)),
        sigma_x: local(kron(&sx, &i_mm)),
        p00: local(p00),
        pop_e1: local(kron(&e1, &i_mm)),
        pop_e2: local(kron(&e2, &i_mm)),
    })
}

/// Full exciton-vibration Hamiltonian in the local exciton-product basis.
pub fn build_hamiltonian<R: Scalar>(params: &DimerParams<R>) -> Result<Operator<R>> {
    params.validate()?;
    let ops = build_operators(params)?;
    build_hamiltonian_with(params, &ops)
}

/// Same as [`build_hamiltonian`] but reusing an already-built operator set.
pub fn build_hamiltonian_with<R: Scalar>(
    params: &DimerParams<R>,
    ops: &OperatorSet<R>,
) -> Result<Operator<R>> {
    let (e1, e2) = exciton_energies(params);
    let f = params.fock_dim();
    let i_mm = identity::<R>(f * f);
    let re = |x: R| Complex::new(x, R::zero());
    let h_exc = ndarray::array![[re(e1), re(R::zero())], [re(R::zero()), re(e2)]];

    let b = lowering::<R>(f);
    let num = b.t().mapv(|z| z.conj()).dot(&b);
    let i_el = identity::<R>(2);
    let i_m = identity::<R>(f);

    let mut h = kron(&h_exc, &i_mm);
    h = h + kron(&i_el, &kron(&num, &i_m)).mapv(|z| z * re(params.omega1));
    h = h + kron(&i_el, &kron(&i_m, &num)).mapv(|z| z * re(params.omega2));
    h = h + ops.theta1.matrix.dot(&ops.x1.matrix).mapv(|z| z * re(params.g1));
    h = h + ops.theta2.matrix.dot(&ops.x2.matrix).mapv(|z| z * re(params.g2));

    let op = Operator::new(h, BasisTag::LocalExcitonProduct);
    let scale = op.max_abs();
    if op.herm_deviation() > R::of(1e-12) * scale {
        return Err(Error::InvariantViolation("constructed Hamiltonian is not Hermitian".into()));
    }
    Ok(op)
}

/// How eigenvector global phases were fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseConvention {
    /// Largest-magnitude component rotated to be real positive, ties broken
    /// by lowest basis index.
    LargestComponentRealPositive,
}

/// Eigendecomposition of the full Hamiltonian, ascending in energy.
#[derive(Debug, Clone)]
pub struct EigenSystem<R: Scalar> {
    /// Eigenvalues in cm⁻¹, ascending.
    pub energies: Array1<R>,
    /// Orthonormal eigenvectors as columns, in local-basis coordinates.
    pub vectors: Array2<Complex<R>>,
    pub phase_convention: PhaseConvention,
}

impl<R: Scalar> EigenSystem<R> {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Energy gap Ω_kj = ε_k − ε_j in cm⁻¹.
    pub fn gap(&self, j: usize, k: usize) -> R {
        self.energies[k] - self.energies[j]
    }

    /// Rotate a local-basis operator into the system eigenbasis, V† O V.
    pub fn to_eigenbasis(&self, op: &Operator<R>) -> Result<Operator<R>> {
        op.check_basis(BasisTag::LocalExcitonProduct)?;
        let vd = self.vectors.t().mapv(|z| z.conj());
        Ok(Operator::new(vd.dot(&op.matrix).dot(&self.vectors), BasisTag::SystemEigen))
    }

    /// Rotate an eigenbasis matrix back to the local basis, V M V†.
    pub fn to_local(&self, matrix: &Array2<Complex<R>>) -> Array2<Complex<R>> {
        let vd = self.vectors.t().mapv(|z| z.conj());
        self.vectors.dot(matrix).dot(&vd)
    }

    /// Single matrix element <ψ_k|O|ψ_j> of a local-basis operator.
    pub fn element(&self, op: &Operator<R>, k: usize, j: usize) -> Complex<R> {
        let vk = self.vectors.column(k);
        let vj = self.vectors.column(j);
        let mut acc = Complex::new(R::zero(), R::zero());
        for (i, vki) in vk.iter().enumerate() {
            let mut row = Complex::new(R::zero(), R::zero());
            for (l, vjl) in vj.iter().enumerate() {
                row += op.matrix[[i, l]] * *vjl;
            }
            acc += vki.conj() * row;
        }
        acc
    }

    /// JSON form: energies plus row-major vectors as [re, im] pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let energies: Vec<f64> = self.energies.iter().map(|e| e.to_f64_lossy()).collect();
        let vectors: Vec<Vec<[f64; 2]>> = self
            .vectors
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|z| [z.re.to_f64_lossy(), z.im.to_f64_lossy()]).collect())
            .collect();
        serde_json::json!({
            "energies_cm1": energies,
            "vectors_row_major": vectors,
            "phase_convention": "largest-component-real-positive",
        })
    }
}

/// Diagonalise a Hermitian operator; ascending spectrum with the phase
/// convention applied.
pub fn diagonalise<R: Scalar>(h: &Operator<R>) -> Result<EigenSystem<R>> {
    let scale = h.max_abs();
    if h.herm_deviation() > R::of(1e-10) * scale.max(R::one()) {
        return Err(Error::InvariantViolation("diagonalise requires a Hermitian operator".into()));
    }
    let (energies, mut vectors) = R::eigh(&h.matrix)?;
    // LAPACK returns ascending eigenvalues; fix each column's global phase.
    for mut col in vectors.columns_mut() {
        let mut best = R::zero();
        let mut best_idx = 0usize;
        for (i, z) in col.iter().enumerate() {
            let n = z.norm();
            if n > best + R::of(1e-12) {
                best = n;
                best_idx = i;
            }
        }
        let pivot = col[best_idx];
        if pivot.norm() > R::zero() {
            let phase = pivot.conj() / Complex::new(pivot.norm(), R::zero());
            for z in col.iter_mut() {
                *z *= phase;
            }
        }
    }
    Ok(EigenSystem {
        energies,
        vectors,
        phase_convention: PhaseConvention::LargestComponentRealPositive,
    })
}

/// One row of the coherence matrix-element table.
#[derive(Debug, Clone, Serialize)]
pub struct PairElements<R> {
    pub j: usize,
    pub k: usize,
    /// Ω_kj = ε_k − ε_j in cm⁻¹.
    pub omega_kj: R,
    /// <ψ_k|X_1|ψ_j>; real with the fixed phase convention and real H.
    pub x1: R,
    pub x2: R,
    pub sigma_x: R,
    pub p00: R,
}

/// Gap and matrix elements for a list of eigenstate pairs.
///
/// Reported signs depend on the phase convention; magnitudes and the
/// relative X1-vs-X2 sign do not.
pub fn matrix_element_table<R: Scalar>(
    eig: &EigenSystem<R>,
    ops: &OperatorSet<R>,
    pairs: &[(usize, usize)],
) -> Result<Vec<PairElements<R>>> {
    let dim = eig.dim();
    let mut out = Vec::with_capacity(pairs.len());
    for &(j, k) in pairs {
        if j >= dim || k >= dim {
            return Err(Error::IndexOutOfRange { j, k, dim });
        }
        let el = |op: &Operator<R>| eig.element(op, k, j).re;
        out.push(PairElements {
            j,
            k,
            omega_kj: eig.gap(j, k),
            x1: el(&ops.x1),
            x2: el(&ops.x2),
            sigma_x: el(&ops.sigma_x),
            p00: el(&ops.p00),
        });
    }
    Ok(out)
}

/// Coherent energy-transfer amplitude indicator.
#[derive(Debug, Clone, Serialize)]
pub struct EtIndicator<R> {
    /// A = 1 / (1 + (Δ / (2g·sin 2θ))²), in [0, 1].
    pub amplitude: R,
    /// Δ = ΔE − ω1 in cm⁻¹.
    pub detuning: R,
    /// Set when the identical-modes assumption behind the formula is broken.
    pub warning: Option<String>,
}

/// Estimate of the maximum coherent population-oscillation amplitude.
pub fn et_amplitude_indicator<R: Scalar>(params: &DimerParams<R>) -> Result<EtIndicator<R>> {
    params.validate()?;
    let mut warning = None;
    if params.omega1 != params.omega2 {
        warning = Some(format!(
            "indicator derived for identical modes, but omega1 = {} != omega2 = {}",
            params.omega1, params.omega2
        ));
    }
    if params.g1 != params.g2 {
        warning = Some(format!(
            "indicator derived for identical couplings, but g1 = {} != g2 = {}",
            params.g1, params.g2
        ));
    }
    let two = R::of(2.0);
    let delta = exciton_splitting(params) - params.omega1;
    let g = (params.g1 + params.g2) / two;
    let sin2t = (two * mixing_angle(params)).sin();
    let amplitude = if delta == R::zero() {
        R::one()
    } else {
        let r = delta / (two * g * sin2t);
        R::one() / (R::one() + r * r)
    };
    Ok(EtIndicator { amplitude, detuning: delta, warning })
}
