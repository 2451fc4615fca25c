//! Planar lumped-parameter lattice: axial springs between point masses.
//!
//! Each node carries two translational DOFs (x, y). Springs transmit force
//! only along the bar axis, so every spring contributes a rank-one 4×4 block
//! to the global stiffness matrix. Damping is Rayleigh, `C = αM + βK`.
//!
//! Time responses are computed with an exact zero-order-hold discretization
//! of the first-order system
//!
//! ```text
//! d/dt [u; v] = [0, I; -M⁻¹K, -M⁻¹C] [u; v] + [0; M⁻¹] f
//! ```
//!
//! obtained from one matrix exponential of the augmented `[[A, B], [0, 0]]·dt`
//! block, so the only approximation is that the force is held constant over
//! each sample interval.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Axis, DofLabel, TimeSeries};

/// Name of the generator behind [`simulate`], recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64) + StandardNormal ziggurat (rand_distr 0.5)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// Axial spring `k(i,j)`; ids are stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: u32,
    pub j: u32,
    pub stiffness: f64,
}

impl Spring {
    pub fn new(a: u32, b: u32, stiffness: f64) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidArgument(format!("spring connects node {a} to itself")));
        }
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spring k({a},{b}) stiffness must be positive, got {stiffness}"
            )));
        }
        Ok(Spring {
            i: a.min(b),
            j: a.max(b),
            stiffness,
        })
    }

    pub fn id(&self) -> (u32, u32) {
        (self.i, self.j)
    }

    pub fn connects(&self, a: u32, b: u32) -> bool {
        self.id() == (a.min(b), a.max(b))
    }
}

/// Undamped-geometry description plus material parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nodes: Vec<Node>,
    pub fixed_nodes: Vec<u32>,
    pub springs: Vec<Spring>,
    /// kg per free DOF.
    pub nodal_mass: f64,
    /// Mass-proportional damping, 1/s.
    pub rayleigh_alpha: f64,
    /// Stiffness-proportional damping, s.
    pub rayleigh_beta: f64,
}

impl LatticeSpec {
    /// Eight-node Warren truss cantilevered at nodes 1 and 2.
    ///
    /// Bottom chord nodes 1,3,5,7 at y = 0; top chord nodes 2,4,6,8 at y = 1;
    /// all springs 1e5 N/m, 1 kg per DOF, α = 0.5 1/s, β = 1e-5 s.
    pub fn canonical() -> Self {
        let nodes = (1..=8u32)
            .map(|id| Node {
                id,
                x: (id - 1) as f64,
                y: if id % 2 == 0 { 1.0 } else { 0.0 },
            })
            .collect();
        let pairs = [
            (1, 2),
            (2, 3),
            (3, 4),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 8),
            (1, 3),
            (3, 5),
            (5, 7),
            (2, 4),
            (4, 6),
            (6, 8),
        ];
        let springs = pairs
            .iter()
            .map(|&(i, j)| Spring {
                i,
                j,
                stiffness: 1e5,
            })
            .collect();
        LatticeSpec {
            nodes,
            fixed_nodes: vec![1, 2],
            springs,
            nodal_mass: 1.0,
            rayleigh_alpha: 0.5,
            rayleigh_beta: 1e-5,
        }
    }

    fn node(&self, id: u32) -> Result<&Node> {
        self.nodes.iter().find(|n| n.id == id).ok_or(Error::UnknownNode(id))
    }
}

/// 4×4 axial-bar stiffness in global coordinates, DOF order `[xa, ya, xb, yb]`.
pub fn element_stiffness(spring: &Spring, a: [f64; 2], b: [f64; 2]) -> Result<Matrix4<f64>> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    if len <= f64::EPSILON * (a[0].abs() + a[1].abs() + b[0].abs() + b[1].abs()).max(1.0) {
        return Err(Error::ZeroLengthBar(spring.i, spring.j));
    }
    let (c, s) = (dx / len, dy / len);
    let block = Matrix2::new(c * c, c * s, c * s, s * s) * spring.stiffness;
    let mut k = Matrix4::zeros();
    k.fixed_view_mut::<2, 2>(0, 0).copy_from(&block);
    k.fixed_view_mut::<2, 2>(2, 2).copy_from(&block);
    k.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-block));
    k.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-block));
    Ok(k)
}

/// Assembled lattice restricted to its free DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    spec: LatticeSpec,
    dofs: Vec<DofLabel>,
    mass: DVector<f64>,
    stiffness: DMatrix<f64>,
    damping: DMatrix<f64>,
}

pub fn build_lattice(spec: &LatticeSpec) -> Result<LatticeModel> {
    validate_spec(spec)?;
    let fixed: BTreeSet<u32> = spec.fixed_nodes.iter().copied().collect();
    let mut free_nodes: Vec<u32> = spec
        .nodes
        .iter()
        .map(|n| n.id)
        .filter(|id| !fixed.contains(id))
        .collect();
    free_nodes.sort_unstable();
    if free_nodes.is_empty() {
        return Err(Error::InvalidArgument("lattice has no free nodes".into()));
    }
    let dofs: Vec<DofLabel> = free_nodes
        .iter()
        .map(|&n| DofLabel::node_pair(n))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let index: HashMap<u32, usize> = free_nodes.iter().enumerate().map(|(i, &n)| (n, 2 * i)).collect();

    let nd = dofs.len();
    let mut k = DMatrix::zeros(nd, nd);
    for spring in &spec.springs {
        let (a, b) = (spec.node(spring.i)?, spec.node(spring.j)?);
        let ke = element_stiffness(spring, [a.x, a.y], [b.x, b.y])?;
        let slots = [
            index.get(&spring.i).copied(),
            index.get(&spring.i).map(|d| d + 1),
            index.get(&spring.j).copied(),
            index.get(&spring.j).map(|d| d + 1),
        ];
        for (r, gr) in slots.iter().enumerate() {
            for (c, gc) in slots.iter().enumerate() {
                if let (Some(gr), Some(gc)) = (gr, gc) {
                    k[(*gr, *gc)] += ke[(r, c)];
                }
            }
        }
    }

    check_load_paths(spec, &fixed, &free_nodes)?;
    check_positive_definite(&k, &dofs)?;

    let mass = DVector::from_element(nd, spec.nodal_mass);
    let damping = DMatrix::from_diagonal(&mass) * spec.rayleigh_alpha + &k * spec.rayleigh_beta;
    Ok(LatticeModel {
        spec: spec.clone(),
        dofs,
        mass,
        stiffness: k,
        damping,
    })
}

fn validate_spec(spec: &LatticeSpec) -> Result<()> {
    let mut ids = BTreeSet::new();
    for n in &spec.nodes {
        if n.id == 0 {
            return Err(Error::InvalidArgument("node ids start at 1".into()));
        }
        if !(n.x.is_finite() && n.y.is_finite()) {
            return Err(Error::InvalidArgument(format!("node {} has non-finite coordinates", n.id)));
        }
        if !ids.insert(n.id) {
            return Err(Error::InvalidArgument(format!("node {} declared twice", n.id)));
        }
    }
    for f in &spec.fixed_nodes {
        if !ids.contains(f) {
            return Err(Error::UnknownNode(*f));
        }
    }
    let mut seen = BTreeSet::new();
    for s in &spec.springs {
        Spring::new(s.i, s.j, s.stiffness)?;
        for end in [s.i, s.j] {
            if !ids.contains(&end) {
                return Err(Error::UnknownNode(end));
            }
        }
        if !seen.insert((s.i.min(s.j), s.i.max(s.j))) {
            return Err(Error::InvalidArgument(format!("spring k({},{}) declared twice", s.i, s.j)));
        }
    }
    if !(spec.nodal_mass.is_finite() && spec.nodal_mass > 0.0) {
        return Err(Error::SingularMass);
    }
    if !(spec.rayleigh_alpha >= 0.0 && spec.rayleigh_beta >= 0.0)
        || !spec.rayleigh_alpha.is_finite()
        || !spec.rayleigh_beta.is_finite()
    {
        return Err(Error::InvalidArgument("Rayleigh coefficients must be finite and non-negative".into()));
    }
    Ok(())
}

/// Every free node needs a spring path to a grounded node.
fn check_load_paths(spec: &LatticeSpec, fixed: &BTreeSet<u32>, free_nodes: &[u32]) -> Result<()> {
    let mut adjacency: HashMap<u32, Vec<u32>> = HashMap::new();
    for s in &spec.springs {
        adjacency.entry(s.i).or_default().push(s.j);
        adjacency.entry(s.j).or_default().push(s.i);
    }
    let mut reached: BTreeSet<u32> = fixed.clone();
    let mut queue: VecDeque<u32> = fixed.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        for &m in adjacency.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            if reached.insert(m) {
                queue.push_back(m);
            }
        }
    }
    match free_nodes.iter().find(|n| !reached.contains(n)) {
        Some(&node) => Err(Error::FloatingNode {
            node,
            detail: "no spring path to a fixed node".into(),
        }),
        None => Ok(()),
    }
}

/// Rejects mechanisms: a zero-stiffness mode is attributed to the node with
/// the largest participation in it.
fn check_positive_definite(k: &DMatrix<f64>, dofs: &[DofLabel]) -> Result<()> {
    let eig = k.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if lmin > 1e-9 * max {
        return Ok(());
    }
    let mode = eig.eigenvectors.column(imin);
    let (dof, _) = mode
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty");
    Err(Error::FloatingNode {
        node: dofs[dof].node(),
        detail: format!("stiffness matrix singular, mechanism along {}", dofs[dof]),
    })
}

impl LatticeModel {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Free DOF labels, ascending node id, x before y.
    pub fn dofs(&self) -> &[DofLabel] {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn dof_index(&self, label: &DofLabel) -> Option<usize> {
        self.dofs.iter().position(|l| l == label)
    }

    pub fn mass_diagonal(&self) -> &DVector<f64> {
        &self.mass
    }

    pub fn mass(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mass)
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }

    pub fn spring(&self, a: u32, b: u32) -> Option<&Spring> {
        self.spec.springs.iter().find(|s| s.connects(a, b))
    }

    /// Nodes joined to `node` by a spring.
    pub fn neighbours(&self, node: u32) -> BTreeSet<u32> {
        self.spec
            .springs
            .iter()
            .filter_map(|s| match (s.i == node, s.j == node) {
                (true, _) => Some(s.j),
                (_, true) => Some(s.i),
                _ => None,
            })
            .collect()
    }
}

/// Returns a rebuilt model with spring `k(i,j)` scaled by `1 - loss_fraction`.
pub fn apply_damage(model: &LatticeModel, spring: (u32, u32), loss_fraction: f64) -> Result<LatticeModel> {
    if !(0.0..1.0).contains(&loss_fraction) {
        return Err(Error::InvalidArgument(format!(
            "loss fraction must lie in [0, 1), got {loss_fraction}"
        )));
    }
    let mut spec = model.spec.clone();
    let target = spec
        .springs
        .iter_mut()
        .find(|s| s.connects(spring.0, spring.1))
        .ok_or(Error::UnknownSpring(spring.0, spring.1))?;
    target.stiffness *= 1.0 - loss_fraction;
    build_lattice(&spec)
}

/// Undamped natural frequencies in Hz, ascending.
pub fn modal_frequencies(model: &LatticeModel) -> Result<Vec<f64>> {
    if model.mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::SingularMass);
    }
    let inv_sqrt = model.mass.map(|m| 1.0 / m.sqrt());
    let scaled = DMatrix::from_fn(model.n_dofs(), model.n_dofs(), |r, c| {
        model.stiffness[(r, c)] * inv_sqrt[r] * inv_sqrt[c]
    });
    let mut freqs: Vec<f64> = scaled
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.max(0.0).sqrt() / (2.0 * PI))
        .collect();
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

/// Point-force white-noise excitation at one DOF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub node: u32,
    pub axis: Axis,
    /// Standard deviation of the force samples, N. Zero only makes sense in tests.
    pub std: f64,
    pub seed: u64,
}

/// Zero-order-hold discrete model `x[k+1] = Φ x[k] + Γ f[k]`, state `[u; v]`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub transition: DMatrix<f64>,
    /// One column per free DOF force.
    pub input: DMatrix<f64>,
    pub dt: f64,
}

impl Discretization {
    pub fn spectral_radius(&self) -> f64 {
        self.transition
            .complex_eigenvalues()
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

pub fn discretize(model: &LatticeModel, fs: f64) -> Result<Discretization> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling frequency must be positive, got {fs}")));
    }
    let n = model.n_dofs();
    let dt = 1.0 / fs;
    let minv = model.mass.map(|m| 1.0 / m);
    let mut aug = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        aug[(i, n + i)] = 1.0;
        aug[(n + i, 2 * n + i)] = minv[i];
        for j in 0..n {
            aug[(n + i, j)] = -minv[i] * model.stiffness[(i, j)];
            aug[(n + i, n + j)] = -minv[i] * model.damping[(i, j)];
        }
    }
    let expm = (aug * dt).exp();
    Ok(Discretization {
        transition: expm.view((0, 0), (2 * n, 2 * n)).into_owned(),
        input: expm.view((0, 2 * n), (2 * n, n)).into_owned(),
        dt,
    })
}

/// Displacement response of every free DOF to Gaussian white-noise forcing,
/// starting from rest. Row 0 is the initial (zero) state.
pub fn simulate(model: &LatticeModel, exc: &ExcitationSpec, fs: f64, duration: f64) -> Result<TimeSeries> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if !(exc.std.is_finite() && exc.std >= 0.0) {
        return Err(Error::InvalidArgument(format!("excitation std must be non-negative, got {}", exc.std)));
    }
    let label = DofLabel::new(exc.node, exc.axis)?;
    let dof = model.dof_index(&label).ok_or_else(|| {
        Error::InvalidArgument(format!("excitation node {} is not a free node", exc.node))
    })?;
    let samples = (fs * duration).round() as usize;
    if samples == 0 {
        return Err(Error::InvalidArgument("fs·duration rounds to zero samples".into()));
    }
    let f_max = modal_frequencies(model)?.last().copied().unwrap_or(0.0);
    if !(fs > 2.0 * f_max) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate {fs} Hz does not exceed twice the highest modal frequency {f_max:.3} Hz"
        )));
    }
    let disc = discretize(model, fs)?;
    let radius = disc.spectral_radius();
    // Undamped modes sit on the unit circle up to rounding.
    if !(radius < 1.0 - 1e-10) {
        return Err(Error::Unstable { radius });
    }

    let n = model.n_dofs();
    let gamma = disc.input.column(dof).into_owned();
    let mut rng = ChaCha20Rng::seed_from_u64(exc.seed);
    let mut state = DVector::<f64>::zeros(2 * n);
    let mut next = DVector::<f64>::zeros(2 * n);
    let mut out = DMatrix::zeros(samples, n);
    for k in 0..samples {
        out.row_mut(k).copy_from(&state.rows(0, n).transpose());
        let z: f64 = StandardNormal.sample(&mut rng);
        next.gemv(1.0, &disc.transition, &state, 0.0);
        next.axpy(exc.std * z, &gamma, 1.0);
        std::mem::swap(&mut state, &mut next);
    }
    TimeSeries::new(fs, model.dofs.clone(), out)
}
