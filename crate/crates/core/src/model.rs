//! Canonical ("chain of integrators") systems and their structured perturbations.
//!
//! A system is `ẋ = (A0 + K + R(t,x)) x + B0 u` where `A0` is a block-diagonal
//! shift matrix, `B0` injects one control per block at the last row of that
//! block, `K` is a known feedback part living only in those control rows and
//! `R(t,x)` is an unknown perturbation whose sparsity pattern is fixed by a
//! [`PerturbationMask`].
//!
//! All indices in this module are zero-based. The JSON front end
//! ([`SystemSpec`]) takes one-based `(row, col)` pairs and converts them.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer partition `n1 ≥ n2 ≥ … ≥ nr ≥ 1` describing the integrator chains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("blocks: at least one block required".into()));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("blocks[{pos}]: block sizes must be >= 1")));
        }
        if let Some(pos) = sizes.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(format!(
                "blocks[{}]: sizes must be non-increasing, got {} after {}",
                pos + 1,
                sizes[pos + 1],
                sizes[pos]
            )));
        }
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        Ok(Self { sizes, offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// State dimension `n = Σ nᵢ`.
    pub fn dim(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    /// Number of blocks (= number of controls) `r`.
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Size of the leading (largest) block, `n1`.
    pub fn largest(&self) -> usize {
        self.sizes[0]
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block] + self.sizes[block]
    }

    /// Zero-based index of the control row `sᵢ − 1` of `block`.
    pub fn control_row(&self, block: usize) -> usize {
        self.offsets[block] + self.sizes[block] - 1
    }

    pub fn control_rows(&self) -> Vec<usize> {
        (0..self.count()).map(|i| self.control_row(i)).collect()
    }

    pub fn is_control_row(&self, row: usize) -> bool {
        let (block, local) = self.locate(row);
        local + 1 == self.sizes[block]
    }

    /// Block index and local (in-block) index of a state coordinate.
    pub fn locate(&self, row: usize) -> (usize, usize) {
        assert!(row < self.dim(), "row {row} out of range");
        let block = self.offsets.partition_point(|&o| o <= row) - 1;
        (block, row - self.offsets[block])
    }

    /// Every valid block structure with `1 ≤ n ≤ max_dim`.
    pub fn enumerate(max_dim: usize) -> Vec<BlockStructure> {
        fn rec(remaining: usize, cap: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if remaining == 0 {
                out.push(prefix.clone());
                return;
            }
            for s in (1..=cap.min(remaining)).rev() {
                prefix.push(s);
                rec(remaining - s, s, prefix, out);
                prefix.pop();
            }
        }
        let mut all = Vec::new();
        for n in 1..=max_dim {
            rec(n, n, &mut Vec::new(), &mut all);
        }
        all.into_iter().map(|s| BlockStructure::new(s).unwrap()).collect()
    }
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(b: BlockStructure) -> Self {
        b.sizes
    }
}

impl fmt::Display for BlockStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.sizes)
    }
}

/// Block-diagonal shift matrix `A0 = diag(A01, …, A0r)`.
pub fn build_a0(blocks: &BlockStructure) -> DMatrix<f64> {
    let n = blocks.dim();
    let mut a0 = DMatrix::zeros(n, n);
    for i in 0..blocks.count() {
        let range = blocks.range(i);
        for m in range.start..range.end - 1 {
            a0[(m, m + 1)] = 1.0;
        }
    }
    a0
}

/// `n × r` input matrix with a single one per column, at the control row of that block.
pub fn build_b0(blocks: &BlockStructure) -> DMatrix<f64> {
    let mut b0 = DMatrix::zeros(blocks.dim(), blocks.count());
    for i in 0..blocks.count() {
        b0[(blocks.control_row(i), i)] = 1.0;
    }
    b0
}

/// A canonical system `ẋ = (A0 + K) x + B0 u` (the unperturbed part).
#[derive(Clone, Debug)]
pub struct CanonicalSystem {
    blocks: BlockStructure,
    a0: DMatrix<f64>,
    b0: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl CanonicalSystem {
    pub fn new(blocks: BlockStructure, k: DMatrix<f64>) -> Result<Self> {
        let n = blocks.dim();
        if k.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "K: expected {n}x{n} matrix, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        for row in 0..n {
            if blocks.is_control_row(row) {
                continue;
            }
            if let Some(col) = (0..n).find(|&c| k[(row, c)] != 0.0) {
                return Err(Error::InvalidInput(format!(
                    "K[{}][{}]: nonzero entry outside a control row",
                    row + 1,
                    col + 1
                )));
            }
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("K: entries must be finite".into()));
        }
        Ok(Self {
            a0: build_a0(&blocks),
            b0: build_b0(&blocks),
            blocks,
            k,
        })
    }

    /// The pure chain of integrators (`K = 0`).
    pub fn unforced(blocks: BlockStructure) -> Self {
        let n = blocks.dim();
        Self::new(blocks, DMatrix::zeros(n, n)).expect("zero K is always valid")
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn b0(&self) -> &DMatrix<f64> {
        &self.b0
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// `B0ᵀ K`, the rows of `K` that carry the controls.
    pub fn b0t_k(&self) -> DMatrix<f64> {
        self.b0.transpose() * &self.k
    }
}

/// Which entries of `R(t,x)` may be nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// Only the in-block superdiagonal couplings `ẋ_m = (1 + r_{m,m+1}) x_{m+1}`.
    Superdiagonal,
    /// In-block lower-Hessenberg pattern plus full control rows.
    #[default]
    General,
}

/// Boolean sparsity pattern for the perturbation matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbationMask {
    kind: MaskKind,
    blocks: BlockStructure,
    allowed: Vec<bool>,
}

/// Structural mask of admissible perturbation entries for `blocks`.
pub fn build_perturbation_mask(blocks: &BlockStructure, kind: MaskKind) -> PerturbationMask {
    let n = blocks.dim();
    let mut allowed = vec![false; n * n];
    for i in 0..blocks.count() {
        let range = blocks.range(i);
        for row in range.clone() {
            let local = row - range.start;
            let control = row == blocks.control_row(i);
            match kind {
                MaskKind::Superdiagonal => {
                    if !control {
                        allowed[row * n + row + 1] = true;
                    }
                }
                MaskKind::General => {
                    if control {
                        allowed[row * n..(row + 1) * n].fill(true);
                    } else {
                        for col in range.start..=range.start + local + 1 {
                            allowed[row * n + col] = true;
                        }
                    }
                }
            }
        }
    }
    PerturbationMask {
        kind,
        blocks: blocks.clone(),
        allowed,
    }
}

impl PerturbationMask {
    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        let n = self.blocks.dim();
        row < n && col < n && self.allowed[row * n + col]
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        let n = self.blocks.dim();
        (0..n * n)
            .filter(|&k| self.allowed[k])
            .map(|k| (k / n, k % n))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.allowed.iter().any(|&a| a)
    }

    pub fn is_subset_of(&self, other: &PerturbationMask) -> bool {
        self.allowed.len() == other.allowed.len()
            && self.allowed.iter().zip(&other.allowed).all(|(&a, &b)| !a || b)
    }

    /// The sub-mask keeping only `positions` (each must already be allowed).
    pub fn restrict(&self, positions: &[(usize, usize)]) -> Result<Self> {
        let n = self.blocks.dim();
        let mut allowed = vec![false; n * n];
        for &(r, c) in positions {
            if !self.allows(r, c) {
                return Err(Error::InvalidInput(format!(
                    "entry ({},{}) is outside the {:?} mask",
                    r + 1,
                    c + 1,
                    self.kind
                )));
            }
            allowed[r * n + c] = true;
        }
        Ok(Self {
            kind: self.kind,
            blocks: self.blocks.clone(),
            allowed,
        })
    }

    /// `R̃`: the mask with every allowed entry set to one.
    pub fn ones(&self) -> DMatrix<f64> {
        let n = self.blocks.dim();
        DMatrix::from_fn(n, n, |r, c| if self.allows(r, c) { 1.0 } else { 0.0 })
    }
}

/// Time/state profile of a single perturbation entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    Sinusoid { amplitude: f64, omega: f64, phase: f64 },
    /// `amplitude · 2 x_s / (1 + x_s²)`, bounded by `|amplitude|`.
    SaturatingState { amplitude: f64, state: usize },
}

impl Profile {
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            Profile::SaturatingState { amplitude, state } => {
                let s = x[state];
                amplitude * 2.0 * s / (1.0 + s * s)
            }
        }
    }

    /// Supremum of `|value|` over all `(t, x)`.
    pub fn peak(&self) -> f64 {
        match *self {
            Profile::Constant { value } => value.abs(),
            Profile::Sinusoid { amplitude, .. } | Profile::SaturatingState { amplitude, .. } => {
                amplitude.abs()
            }
        }
    }

    fn scaled(&self, s: f64) -> Profile {
        match *self {
            Profile::Constant { value } => Profile::Constant { value: value * s },
            Profile::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Profile::Sinusoid {
                amplitude: amplitude * s,
                omega,
                phase,
            },
            Profile::SaturatingState { amplitude, state } => Profile::SaturatingState {
                amplitude: amplitude * s,
                state,
            },
        }
    }
}

/// One nonzero entry `r_{row,col}(t,x)` of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub row: usize,
    pub col: usize,
    #[serde(flatten)]
    pub profile: Profile,
}

type CustomFn = dyn Fn(f64, &[f64], &mut DMatrix<f64>) + Send + Sync;

#[derive(Clone)]
enum Realization {
    Terms(Vec<Term>),
    /// User callback writing `R(t,x)` into a zeroed matrix.
    Custom(Arc<CustomFn>),
}

impl fmt::Debug for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Realization::Terms(t) => f.debug_tuple("Terms").field(t).finish(),
            Realization::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    ExceedsBound,
    OutsideMask,
}

/// A sampled perturbation entry that broke the admissibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub kind: ViolationKind,
}

/// A structured unknown perturbation: mask, declared bound Δ and a deterministic realization.
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    mask: PerturbationMask,
    bound: f64,
    realization: Realization,
}

impl PerturbationSpec {
    /// Checked constructor: every term must sit inside the mask and respect `bound`.
    pub fn new(mask: PerturbationMask, bound: f64, terms: Vec<Term>) -> Result<Self> {
        let spec = Self::with_declared_bound(mask, bound, terms)?;
        if let Realization::Terms(terms) = &spec.realization {
            for term in terms {
                let peak = term.profile.peak();
                if peak > bound * (1.0 + 1e-12) {
                    return Err(Error::BoundExceeded {
                        row: term.row + 1,
                        col: term.col + 1,
                        value: peak,
                        bound,
                    });
                }
            }
        }
        Ok(spec)
    }

    /// Like [`new`](Self::new) but terms may exceed `bound`; such samples are
    /// only reported as [`Violation`]s during evaluation. Used for stress runs.
    pub fn with_declared_bound(mask: PerturbationMask, bound: f64, terms: Vec<Term>) -> Result<Self> {
        if !(bound >= 0.0) || bound.is_nan() {
            return Err(Error::Domain(format!("perturbation bound must be >= 0, got {bound}")));
        }
        let n = mask.blocks().dim();
        for term in &terms {
            if !mask.allows(term.row, term.col) {
                return Err(Error::InvalidInput(format!(
                    "perturbation entry ({},{}) is outside the {:?} mask",
                    term.row + 1,
                    term.col + 1,
                    mask.kind()
                )));
            }
            if let Profile::SaturatingState { state, .. } = term.profile {
                if state >= n {
                    return Err(Error::InvalidInput(format!(
                        "saturating term ({},{}) references state {} of {n}",
                        term.row + 1,
                        term.col + 1,
                        state + 1
                    )));
                }
            }
        }
        Ok(Self {
            mask,
            bound,
            realization: Realization::Terms(terms),
        })
    }

    /// A user-supplied realization. The callback must be deterministic, re-entrant
    /// and locally Lipschitz in `x`; nothing here checks the last property.
    pub fn custom<F>(mask: PerturbationMask, bound: f64, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        Self {
            mask,
            bound,
            realization: Realization::Custom(Arc::new(f)),
        }
    }

    /// `R ≡ 0` on the given mask.
    pub fn zero(mask: PerturbationMask) -> Self {
        Self {
            mask,
            bound: 0.0,
            realization: Realization::Terms(Vec::new()),
        }
    }

    pub fn mask(&self) -> &PerturbationMask {
        &self.mask
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn terms(&self) -> Option<&[Term]> {
        match &self.realization {
            Realization::Terms(t) => Some(t),
            Realization::Custom(_) => None,
        }
    }

    /// Writes `R(t,x)` into `out` (resized and zeroed) and appends any
    /// admissibility violations to `violations`.
    pub fn evaluate_into(
        &self,
        t: f64,
        x: &[f64],
        out: &mut DMatrix<f64>,
        violations: &mut Vec<Violation>,
    ) {
        let n = self.mask.blocks().dim();
        if out.shape() != (n, n) {
            *out = DMatrix::zeros(n, n);
        } else {
            out.fill(0.0);
        }
        match &self.realization {
            Realization::Terms(terms) => {
                for term in terms {
                    out[(term.row, term.col)] += term.profile.value(t, x);
                }
            }
            Realization::Custom(f) => f(t, x, out),
        }
        for row in 0..n {
            for col in 0..n {
                let value = out[(row, col)];
                if value == 0.0 {
                    continue;
                }
                let kind = if !self.mask.allows(row, col) {
                    ViolationKind::OutsideMask
                } else if value.abs() > self.bound * (1.0 + 1e-12) {
                    ViolationKind::ExceedsBound
                } else {
                    continue;
                };
                violations.push(Violation {
                    t,
                    row,
                    col,
                    value,
                    kind,
                });
            }
        }
    }

    pub fn matrix(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(0, 0);
        let mut sink = Vec::new();
        self.evaluate_into(t, x, &mut out, &mut sink);
        out
    }

    /// Same structure with every amplitude (and the declared bound) multiplied by `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("scale must be >= 0, got {s}")));
        }
        let realization = match &self.realization {
            Realization::Terms(terms) => Realization::Terms(
                terms
                    .iter()
                    .map(|t| Term {
                        profile: t.profile.scaled(s),
                        ..*t
                    })
                    .collect(),
            ),
            Realization::Custom(f) => {
                let f = Arc::clone(f);
                Realization::Custom(Arc::new(move |t, x, out: &mut DMatrix<f64>| {
                    f(t, x, out);
                    *out *= s;
                }))
            }
        };
        Ok(Self {
            mask: self.mask.clone(),
            bound: self.bound * s,
            realization,
        })
    }

    /// A random member of the admissible family: each mask position is
    /// populated with probability `density` by a constant, sinusoidal or
    /// saturating profile whose peak does not exceed `bound`.
    pub fn random_admissible<R: Rng + ?Sized>(
        mask: PerturbationMask,
        bound: f64,
        density: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = mask.blocks().dim();
        let mut terms = Vec::new();
        for (row, col) in mask.positions() {
            if !rng.random_bool(density.clamp(0.0, 1.0)) {
                continue;
            }
            let amplitude = bound * rng.random_range(-1.0..=1.0);
            let profile = match rng.random_range(0..3) {
                0 => Profile::Constant { value: amplitude },
                1 => Profile::Sinusoid {
                    amplitude,
                    omega: rng.random_range(0.1..10.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                },
                _ => Profile::SaturatingState {
                    amplitude,
                    state: rng.random_range(0..n),
                },
            };
            terms.push(Term { row, col, profile });
        }
        Self::new(mask, bound, terms)
    }
}

/// Built-in perturbation families selectable from JSON.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    None,
    Constant,
    Sinusoid,
    SaturatingState,
}

/// Parameters for [`builtin_perturbation`]. Entry coordinates are one-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    /// constant: `[row, col, value]`; sinusoid: `[row, col]`; saturating: `[row, col, state]`.
    /// Defaults to every mask position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<f64>>>,
    /// Constant value or sinusoid/saturating amplitude used when not given per entry (default Δ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    /// Phase increment between consecutive sinusoid entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_step: Option<f64>,
}

fn one_based(value: f64, what: &str, limit: usize) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || value > limit as f64 {
        return Err(Error::InvalidInput(format!(
            "perturbation.params.entries: {what} {value} must be an integer in 1..={limit}"
        )));
    }
    Ok(value as usize - 1)
}

/// Construct one of the built-in families on `mask` with bound `delta`.
pub fn builtin_perturbation(
    kind: BuiltinKind,
    mask: PerturbationMask,
    delta: f64,
    params: &BuiltinParams,
) -> Result<PerturbationSpec> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("perturbation.delta must be finite and >= 0, got {delta}")));
    }
    let n = mask.blocks().dim();
    let amplitude = params.amplitude.unwrap_or(delta);
    let arity = match kind {
        BuiltinKind::None => return Ok(PerturbationSpec::zero(mask)),
        BuiltinKind::Constant | BuiltinKind::SaturatingState => 3,
        BuiltinKind::Sinusoid => 2,
    };
    let positions: Vec<(usize, usize, Option<f64>)> = match &params.entries {
        Some(entries) => entries
            .iter()
            .map(|e| {
                if e.len() != arity && !(arity == 3 && e.len() == 2) {
                    return Err(Error::InvalidInput(format!(
                        "perturbation.params.entries: expected {arity} numbers per entry, got {}",
                        e.len()
                    )));
                }
                Ok((
                    one_based(e[0], "row", n)?,
                    one_based(e[1], "col", n)?,
                    e.get(2).copied(),
                ))
            })
            .collect::<Result<_>>()?,
        None => mask.positions().into_iter().map(|(r, c)| (r, c, None)).collect(),
    };
    let omega = params.omega.unwrap_or(1.0);
    let phase = params.phase.unwrap_or(0.0);
    let step = params.phase_step.unwrap_or(0.0);
    let mut terms = Vec::with_capacity(positions.len());
    for (idx, (row, col, extra)) in positions.into_iter().enumerate() {
        let profile = match kind {
            BuiltinKind::Constant => Profile::Constant {
                value: extra.unwrap_or(amplitude),
            },
            BuiltinKind::Sinusoid => Profile::Sinusoid {
                amplitude,
                omega,
                phase: phase + idx as f64 * step,
            },
            BuiltinKind::SaturatingState => Profile::SaturatingState {
                amplitude,
                state: match extra {
                    Some(s) => one_based(s, "state", n)?,
                    None => col,
                },
            },
            BuiltinKind::None => unreachable!(),
        };
        terms.push(Term { row, col, profile });
    }
    PerturbationSpec::new(mask, delta, terms)
}

/// JSON perturbation section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: BuiltinKind,
    #[serde(default)]
    pub mask: MaskKind,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub params: BuiltinParams,
}

/// JSON system description: `{"blocks": [...], "K": [[...]], "perturbation": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub blocks: Vec<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<(CanonicalSystem, PerturbationSpec)> {
        let blocks = BlockStructure::new(self.blocks.clone())?;
        let n = blocks.dim();
        let k = match &self.k {
            None => DMatrix::zeros(n, n),
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "K: expected {n} rows, got {}",
                        rows.len()
                    )));
                }
                if let Some(i) = rows.iter().position(|r| r.len() != n) {
                    return Err(Error::InvalidInput(format!(
                        "K[{}]: expected {n} columns, got {}",
                        i + 1,
                        rows[i].len()
                    )));
                }
                DMatrix::from_fn(n, n, |r, c| rows[r][c])
            }
        };
        let system = CanonicalSystem::new(blocks.clone(), k)?;
        let perturbation = match &self.perturbation {
            None => PerturbationSpec::zero(build_perturbation_mask(&blocks, MaskKind::General)),
            Some(p) => builtin_perturbation(
                p.kind,
                build_perturbation_mask(&blocks, p.mask),
                p.delta,
                &p.params,
            )?,
        };
        Ok((system, perturbation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blocks(s: &[usize]) -> BlockStructure {
        BlockStructure::new(s.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(BlockStructure::new(vec![]).is_err());
        assert!(BlockStructure::new(vec![2, 0]).is_err());
        assert!(BlockStructure::new(vec![1, 2]).is_err());
        let b = blocks(&[3, 2, 2]);
        assert_eq!(b.dim(), 7);
        assert_eq!(b.control_rows(), vec![2, 4, 6]);
        assert_eq!(b.locate(5), (2, 0));
    }

    #[test]
    fn a0_and_b0_small_cases() {
        let a = build_a0(&blocks(&[2, 2]));
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 1)] = 1.0;
        expect[(2, 3)] = 1.0;
        assert_eq!(a, expect);
        assert_eq!(build_a0(&blocks(&[1])), DMatrix::zeros(1, 1));
        let a3 = build_a0(&blocks(&[3]));
        assert_eq!(a3.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!((a3[(0, 1)], a3[(1, 2)]), (1.0, 1.0));

        let b = build_b0(&blocks(&[2, 2]));
        assert_eq!((b[(1, 0)], b[(3, 1)]), (1.0, 1.0));
        assert_eq!(b.sum(), 2.0);
        assert_eq!(build_b0(&blocks(&[1])), DMatrix::from_element(1, 1, 1.0));
        let b31 = build_b0(&blocks(&[3, 1]));
        assert_eq!((b31[(2, 0)], b31[(3, 1)], b31.sum()), (1.0, 1.0, 2.0));
    }

    #[test]
    fn structural_invariants_exhaustive() {
        for b in BlockStructure::enumerate(12) {
            let n = b.dim();
            let a0 = build_a0(&b);
            let b0 = build_b0(&b);
            assert_eq!(b0.sum() as usize, b.count());
            assert_eq!(b0.transpose() * &b0, DMatrix::identity(b.count(), b.count()));
            for r in 0..n {
                for c in 0..n {
                    let expect = c == r + 1 && !b.is_control_row(r);
                    assert_eq!(a0[(r, c)] == 1.0, expect, "{b} ({r},{c})");
                }
            }
            assert_eq!(*b.control_rows().last().unwrap(), n - 1);
            let sup = build_perturbation_mask(&b, MaskKind::Superdiagonal);
            let gen = build_perturbation_mask(&b, MaskKind::General);
            assert!(sup.is_subset_of(&gen), "{b}");
            // superdiagonal mask coincides with the A0 pattern
            assert_eq!(sup.ones(), a0);
        }
        assert_eq!(BlockStructure::enumerate(4).len(), 1 + 2 + 3 + 5);
    }

    #[test]
    fn masks_match_the_structured_pattern() {
        let sup = build_perturbation_mask(&blocks(&[2, 2]), MaskKind::Superdiagonal);
        assert_eq!(sup.positions(), vec![(0, 1), (2, 3)]);
        assert!(build_perturbation_mask(&blocks(&[1]), MaskKind::Superdiagonal).is_empty());

        let gen = build_perturbation_mask(&blocks(&[3]), MaskKind::General);
        let row2: Vec<_> = (0..3).filter(|&c| gen.allows(1, c)).collect();
        assert_eq!(row2, vec![0, 1, 2]);
        let row1: Vec<_> = (0..3).filter(|&c| gen.allows(0, c)).collect();
        assert_eq!(row1, vec![0, 1]);

        // control rows span all columns; the pendulum coupling (2,3) is admissible
        let g22 = build_perturbation_mask(&blocks(&[2, 2]), MaskKind::General);
        for &(r, c) in &[(1, 0), (1, 2), (3, 0), (3, 2)] {
            assert!(g22.allows(r, c));
        }
        assert!(!g22.allows(0, 2));
        assert!(!g22.allows(2, 0));
    }

    #[test]
    fn builtin_families() {
        let b = blocks(&[2, 2]);
        let mask = build_perturbation_mask(&b, MaskKind::General);
        let zero = builtin_perturbation(
            BuiltinKind::Constant,
            mask.clone(),
            0.0,
            &BuiltinParams::default(),
        )
        .unwrap();
        assert_eq!(zero.matrix(1.0, &[1.0; 4]), DMatrix::zeros(4, 4));

        let sin = builtin_perturbation(
            BuiltinKind::Sinusoid,
            build_perturbation_mask(&b, MaskKind::Superdiagonal),
            0.1,
            &BuiltinParams::default(),
        )
        .unwrap();
        let r = sin.matrix(std::f64::consts::FRAC_PI_2, &[0.0; 4]);
        assert!((r[(0, 1)] - 0.1).abs() < 1e-15);

        let too_big = BuiltinParams {
            entries: Some(vec![vec![2.0, 1.0, 0.5]]),
            ..Default::default()
        };
        assert!(matches!(
            builtin_perturbation(BuiltinKind::Constant, mask.clone(), 0.1, &too_big),
            Err(Error::BoundExceeded { .. })
        ));
        let outside = BuiltinParams {
            entries: Some(vec![vec![1.0, 3.0, 0.05]]),
            ..Default::default()
        };
        assert!(matches!(
            builtin_perturbation(BuiltinKind::Constant, mask, 0.1, &outside),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn violations_are_recorded_not_clipped() {
        let b = blocks(&[2]);
        let mask = build_perturbation_mask(&b, MaskKind::General);
        let spec = PerturbationSpec::with_declared_bound(
            mask,
            0.1,
            vec![Term {
                row: 1,
                col: 0,
                profile: Profile::Constant { value: 0.5 },
            }],
        )
        .unwrap();
        let mut out = DMatrix::zeros(0, 0);
        let mut v = Vec::new();
        spec.evaluate_into(0.25, &[1.0, 1.0], &mut out, &mut v);
        assert_eq!(out[(1, 0)], 0.5);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::ExceedsBound);
        assert_eq!((v[0].row, v[0].col, v[0].t), (1, 0, 0.25));
    }

    #[test]
    fn custom_outside_mask_is_flagged() {
        let b = blocks(&[2]);
        let spec = PerturbationSpec::custom(
            build_perturbation_mask(&b, MaskKind::Superdiagonal),
            1.0,
            |_, _, r| r[(1, 1)] = 0.2,
        );
        let mut out = DMatrix::zeros(0, 0);
        let mut v = Vec::new();
        spec.evaluate_into(0.0, &[0.0, 0.0], &mut out, &mut v);
        assert_eq!(v[0].kind, ViolationKind::OutsideMask);
    }

    #[test]
    fn builtin_and_random_families_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in [blocks(&[3, 2]), blocks(&[2, 2, 1]), blocks(&[4])] {
            for kind in [MaskKind::Superdiagonal, MaskKind::General] {
                let mask = build_perturbation_mask(&b, kind);
                let delta = 0.37;
                let fams = vec![
                    builtin_perturbation(BuiltinKind::Constant, mask.clone(), delta, &Default::default()).unwrap(),
                    builtin_perturbation(
                        BuiltinKind::Sinusoid,
                        mask.clone(),
                        delta,
                        &BuiltinParams {
                            omega: Some(2.3),
                            phase_step: Some(0.7),
                            ..Default::default()
                        },
                    )
                    .unwrap(),
                    builtin_perturbation(BuiltinKind::SaturatingState, mask.clone(), delta, &Default::default()).unwrap(),
                    PerturbationSpec::random_admissible(mask.clone(), delta, 0.8, &mut rng).unwrap(),
                ];
                let n = b.dim();
                for fam in &fams {
                    let mut out = DMatrix::zeros(0, 0);
                    let mut v = Vec::new();
                    for _ in 0..10_000 / fams.len() {
                        let t = rng.random_range(0.0..100.0);
                        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
                        fam.evaluate_into(t, &x, &mut out, &mut v);
                        assert!(out.amax() <= delta * (1.0 + 1e-12));
                    }
                    assert!(v.is_empty());
                }
            }
        }
    }

    #[test]
    fn system_spec_from_json() {
        let json = r#"{"blocks":[2,2],"K":[[0,0,0,0],[-0.1,0,0,0],[0,0,0,0],[0,0,-0.2,0]],
            "perturbation":{"kind":"constant","mask":"general","delta":0.1,
            "params":{"entries":[[2,1,-0.05],[4,3,0.1]]}}}"#;
        let spec: SystemSpec = serde_json::from_str(json).unwrap();
        let (sys, pert) = spec.build().unwrap();
        assert_eq!(sys.k()[(3, 2)], -0.2);
        assert_eq!(pert.matrix(0.0, &[0.0; 4])[(1, 0)], -0.05);

        let bad_k = r#"{"blocks":[2],"K":[[1,0],[0,0]]}"#;
        let err = serde_json::from_str::<SystemSpec>(bad_k).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("K[1][1]"), "{err}");
        assert!(serde_json::from_str::<SystemSpec>(r#"{"blocks":[1,2]}"#)
            .unwrap()
            .build()
            .is_err());
    }
}
