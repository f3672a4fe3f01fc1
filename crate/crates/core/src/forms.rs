//! Compactly supported 1-forms on the plane and their (iterated) integrals along polylines.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoxFamily, GeometryError, GridSpec, LatticePoint, Point, RoundedSquare};
use crate::stochastic::PiecewisePath;

pub const MAX_FORMS: usize = 16;
pub const MAX_DEGREE: usize = 30;
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Absolute quadrature error floor per unit of segment parameter.
pub const QUADRATURE_ABS_TOL: f64 = 1e-24;
const MAX_DEPTH: u32 = 40;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("number of forms {0} outside 1..={MAX_FORMS}")]
    FormCount(usize),
    #[error("polynomial degree {0} exceeds {MAX_DEGREE}")]
    Degree(usize),
    #[error("least-squares fit is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A 1-form `f1 dx¹ + f2 dx²`.
pub trait OneForm: Send + Sync {
    fn eval(&self, p: Point) -> [f64; 2];

    /// A rounded square outside which the form vanishes.
    fn support(&self) -> Option<RoundedSquare> {
        None
    }

    /// Sub-interval of `[0, 1]` where the form may be nonzero on the segment `a → b`.
    fn active_interval(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        match self.support() {
            None => Some((0.0, 1.0)),
            Some(sq) => clip_unit(sq.line_interval(a, b)),
        }
    }

    /// Segment parameters in `(0, 1)` where the form is not smooth.
    fn breakpoints(&self, _a: Point, _b: Point) -> Vec<f64> {
        Vec::new()
    }

    /// `∫ f · dγ` over the straight segment `a → b`.
    fn segment_integral(&self, a: Point, b: Point) -> f64 {
        let Some((lo, hi)) = self.active_interval(a, b) else {
            return 0.0;
        };
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints(a, b).into_iter().filter(|&t| t > lo && t < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let d = b - a;
        let g = |s: f64| {
            let f = self.eval(a.lerp(b, s));
            f[0] * d.x + f[1] * d.y
        };
        cuts.windows(2).map(|w| adaptive_gl8(&g, w[0], w[1])).sum()
    }
}

fn clip_unit(iv: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let (lo, hi) = iv?;
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    (lo < hi).then_some((lo, hi))
}

impl<F: OneForm + ?Sized> OneForm for &F {
    fn eval(&self, p: Point) -> [f64; 2] {
        (**self).eval(p)
    }
    fn support(&self) -> Option<RoundedSquare> {
        (**self).support()
    }
    fn active_interval(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        (**self).active_interval(a, b)
    }
    fn breakpoints(&self, a: Point, b: Point) -> Vec<f64> {
        (**self).breakpoints(a, b)
    }
    fn segment_integral(&self, a: Point, b: Point) -> f64 {
        (**self).segment_integral(a, b)
    }
}

impl<F: OneForm + ?Sized> OneForm for Box<F> {
    fn eval(&self, p: Point) -> [f64; 2] {
        (**self).eval(p)
    }
    fn support(&self) -> Option<RoundedSquare> {
        (**self).support()
    }
    fn active_interval(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        (**self).active_interval(a, b)
    }
    fn breakpoints(&self, a: Point, b: Point) -> Vec<f64> {
        (**self).breakpoints(a, b)
    }
    fn segment_integral(&self, a: Point, b: Point) -> f64 {
        (**self).segment_integral(a, b)
    }
}

/// `dx¹` (index 1) or `dx²` (index 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateForm(pub u8);

impl OneForm for CoordinateForm {
    fn eval(&self, _p: Point) -> [f64; 2] {
        if self.0 == 1 {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    }

    fn segment_integral(&self, a: Point, b: Point) -> f64 {
        if self.0 == 1 {
            b.x - a.x
        } else {
            b.y - a.y
        }
    }
}

/// Arbitrary form given by a closure.
pub struct ClosureForm<F> {
    f: F,
    support: Option<RoundedSquare>,
}

impl<F: Fn(Point) -> [f64; 2] + Send + Sync> ClosureForm<F> {
    pub fn new(f: F) -> Self {
        Self { f, support: None }
    }

    pub fn with_support(f: F, support: RoundedSquare) -> Self {
        Self {
            f,
            support: Some(support),
        }
    }
}

impl<F: Fn(Point) -> [f64; 2] + Send + Sync> OneForm for ClosureForm<F> {
    fn eval(&self, p: Point) -> [f64; 2] {
        (self.f)(p)
    }
    fn support(&self) -> Option<RoundedSquare> {
        self.support
    }
}

/// `Σ c_i α_i`, integrated as one form.
pub struct LinearCombination<'a> {
    pub terms: Vec<(f64, &'a dyn OneForm)>,
}

impl OneForm for LinearCombination<'_> {
    fn eval(&self, p: Point) -> [f64; 2] {
        self.terms.iter().fold([0.0; 2], |acc, (c, f)| {
            let v = f.eval(p);
            [acc[0] + c * v[0], acc[1] + c * v[1]]
        })
    }

    fn active_interval(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        self.terms
            .iter()
            .filter_map(|(_, f)| f.active_interval(a, b))
            .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
    }

    fn breakpoints(&self, a: Point, b: Point) -> Vec<f64> {
        self.terms
            .iter()
            .flat_map(|(_, f)| {
                let mut v = f.breakpoints(a, b);
                v.extend(f.active_interval(a, b).map_or(Vec::new(), |(lo, hi)| vec![lo, hi]));
                v
            })
            .collect()
    }
}

fn sigma(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ monotone step from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let (a, b) = (sigma(t), sigma(1.0 - t));
        a / (a + b)
    }
}

/// The form `f dx¹` with `f = x₂ − εz₂` on `K_z`, vanishing outside `Z_z`, and a
/// smooth radial cutoff across the band between them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpForm {
    grid: GridSpec,
    z: LatticePoint,
    boxes: BoxFamily,
}

pub fn bump_form(grid: GridSpec, z: LatticePoint) -> BumpForm {
    BumpForm {
        grid,
        z,
        boxes: grid.boxes_for(z),
    }
}

impl BumpForm {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn site(&self) -> LatticePoint {
        self.z
    }

    pub fn boxes(&self) -> &BoxFamily {
        &self.boxes
    }

    pub fn f1(&self, p: Point) -> f64 {
        let y = p.y - self.boxes.z.center.y;
        if self.boxes.k.contains(p) {
            return y;
        }
        let hz = self.boxes.z.half_width;
        let hk = self.boxes.k.half_width;
        let r = self.boxes.z.radial_scale(p) * hz;
        if r >= hz {
            return 0.0;
        }
        y * smooth_step((hz - r) / (hz - hk))
    }

    pub fn descriptor(&self) -> FormDescriptor {
        FormDescriptor::Bump {
            epsilon: self.grid.epsilon,
            phi: self.grid.phi,
            z: self.z,
            beta: Some(self.grid.beta),
        }
    }
}

impl OneForm for BumpForm {
    fn eval(&self, p: Point) -> [f64; 2] {
        [self.f1(p), 0.0]
    }

    fn support(&self) -> Option<RoundedSquare> {
        Some(self.boxes.z)
    }

    fn breakpoints(&self, a: Point, b: Point) -> Vec<f64> {
        match self.boxes.k.line_interval(a, b) {
            Some((lo, hi)) => vec![lo, hi],
            None => Vec::new(),
        }
    }

    fn segment_integral(&self, a: Point, b: Point) -> f64 {
        let dx = b.x - a.x;
        if dx == 0.0 {
            return 0.0;
        }
        let Some((z0, z1)) = self.active_interval(a, b) else {
            return 0.0;
        };
        let cy = self.boxes.z.center.y;
        let g = |s: f64| self.f1(a.lerp(b, s)) * dx;
        // x₂ dx¹ is exact on the plateau
        let plateau = |s0: f64, s1: f64| {
            let (p, q) = (a.lerp(b, s0), a.lerp(b, s1));
            0.5 * (p.y + q.y - 2.0 * cy) * (q.x - p.x)
        };
        match clip_unit(self.boxes.k.line_interval(a, b)) {
            None => adaptive_gl8(&g, z0, z1),
            Some((k0, k1)) => {
                let (k0, k1) = (k0.max(z0), k1.min(z1));
                let left = if k0 > z0 { adaptive_gl8(&g, z0, k0) } else { 0.0 };
                let right = if z1 > k1 { adaptive_gl8(&g, k1, z1) } else { 0.0 };
                left + plateau(k0, k1) + right
            }
        }
    }
}

/// Serialized description from which a form is rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FormDescriptor {
    Bump {
        epsilon: f64,
        phi: f64,
        z: LatticePoint,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    Coordinate {
        index: u8,
    },
}

impl FormDescriptor {
    pub fn build(&self) -> Result<Box<dyn OneForm>, FormError> {
        Ok(match *self {
            FormDescriptor::Bump { epsilon, phi, z, beta } => {
                let base = GridSpec::relaxed(epsilon)?;
                let grid = GridSpec::new(epsilon, phi, phi.ln() / epsilon.ln(), beta.unwrap_or(base.beta))?;
                Box::new(bump_form(grid, z))
            }
            FormDescriptor::Coordinate { index } => Box::new(CoordinateForm(index)),
        })
    }
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gl8(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut sum = 0.0;
    let mut abs = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
        let v = g(m + r * x);
        sum += w * v;
        abs += w * v.abs();
    }
    (sum * r, abs * r.abs())
}

/// Adaptive order-8 Gauss–Legendre: bisect until the halves agree with the whole
/// to `QUADRATURE_TOL` relative to the integral of `|g|` over `[lo, hi]`, or to the
/// absolute floor `QUADRATURE_ABS_TOL` per unit length.
pub fn adaptive_gl8(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    fn go(g: &impl Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let (l, la) = gl8(g, lo, mid);
        let (r, ra) = gl8(g, mid, hi);
        let halves = l + r;
        if (halves - whole).abs() <= tol.max(QUADRATURE_TOL * (la + ra)) || depth >= MAX_DEPTH || mid <= lo || mid >= hi {
            return halves;
        }
        go(g, lo, mid, l, tol, depth + 1) + go(g, mid, hi, r, tol, depth + 1)
    }
    if hi <= lo {
        return 0.0;
    }
    let (whole, mass) = gl8(g, lo, hi);
    go(g, lo, hi, whole, (QUADRATURE_TOL * mass).max(QUADRATURE_ABS_TOL * (hi - lo)), 0)
}

/// `∫ f1 dx¹ + f2 dx²` along the polyline.
pub fn line_integral(path: &PiecewisePath, form: &dyn OneForm) -> f64 {
    path.segments().map(|(_, _, a, b)| form.segment_integral(a, b)).sum()
}

/// Running values of an iterated integral.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Path times of the stored nodes.
    pub times: Vec<f64>,
    /// `values[n][j]` is the nesting level `j + 1` integral at `times[n]`.
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Linear interpolation of nesting level `j` (1-based) at time `t`.
    pub fn at(&self, t: f64, j: usize) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values.first().map_or(0.0, |v| v[j - 1]);
        }
        if k == self.times.len() {
            return self.values.last().map_or(0.0, |v| v[j - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1][j - 1], self.values[k][j - 1]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// `sup_t |I_j(t)|` over the stored nodes.
    pub fn sup_abs(&self, j: usize) -> f64 {
        self.values.iter().map(|v| v[j - 1].abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedIntegral {
    /// `I_k` at the end of the path.
    pub value: f64,
    /// `I_1 … I_k` at the end of the path.
    pub levels: Vec<f64>,
    pub trajectory: Option<Trajectory>,
}

/// Spectral integration matrix on the GL8 nodes of `[-1, 1]`:
/// `A[i][m] = ∫_{-1}^{x_i} L_m`.
fn integration_matrix() -> &'static [[f64; 8]; 8] {
    static A: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    A.get_or_init(|| {
        let lagrange = |m: usize, x: f64| {
            GL8_NODES
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != m)
                .map(|(_, &xq)| (x - xq) / (GL8_NODES[m] - xq))
                .product::<f64>()
        };
        let mut a = [[0.0; 8]; 8];
        for (i, row) in a.iter_mut().enumerate() {
            let (lo, hi) = (-1.0, GL8_NODES[i]);
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (m, entry) in row.iter_mut().enumerate() {
                *entry = r * GL8_NODES
                    .iter()
                    .zip(GL8_WEIGHTS)
                    .map(|(y, w)| w * lagrange(m, c + r * y))
                    .sum::<f64>();
            }
        }
        a
    })
}

struct Nested<'a> {
    forms: &'a [&'a dyn OneForm],
    a: Point,
    b: Point,
}

impl Nested<'_> {
    /// One GL8 panel on `[s0, s1]` starting from `start` (`start[0] = 1`). Returns the end
    /// values and the per-level integral of the absolute integrand.
    fn panel(&self, s0: f64, s1: f64, start: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.forms.len();
        let (c, r) = (0.5 * (s0 + s1), 0.5 * (s1 - s0));
        let d = self.b - self.a;
        let amat = integration_matrix();
        // integrands g_j at the nodes
        let mut g = [[0.0; 8]; MAX_FORMS];
        for (i, x) in GL8_NODES.iter().enumerate() {
            let p = self.a.lerp(self.b, c + r * x);
            for (j, f) in self.forms.iter().enumerate() {
                let v = f.eval(p);
                g[j][i] = v[0] * d.x + v[1] * d.y;
            }
        }
        let mut prev = [1.0; 8];
        let mut end = vec![1.0; k + 1];
        let mut mass = vec![0.0; k + 1];
        for j in 1..=k {
            let prod: [f64; 8] = std::array::from_fn(|m| prev[m] * g[j - 1][m]);
            let mut cur = [0.0; 8];
            for (i, ci) in cur.iter_mut().enumerate() {
                *ci = start[j] + r * amat[i].iter().zip(&prod).map(|(a, p)| a * p).sum::<f64>();
            }
            end[j] = start[j] + r * GL8_WEIGHTS.iter().zip(&prod).map(|(w, p)| w * p).sum::<f64>();
            mass[j] = r * GL8_WEIGHTS.iter().zip(&prod).map(|(w, p)| w * p.abs()).sum::<f64>();
            prev = cur;
        }
        (end, mass)
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive(&self, s0: f64, s1: f64, start: &[f64], whole: Vec<f64>, tol: &[f64], depth: u32, nodes: &mut Vec<(f64, Vec<f64>)>) -> Vec<f64> {
        let mid = 0.5 * (s0 + s1);
        let (left, lm) = self.panel(s0, mid, start);
        let (right, rm) = self.panel(mid, s1, &left);
        let converged = (1..whole.len()).all(|j| {
            let local = QUADRATURE_TOL * (lm[j] + rm[j]) + right[j].abs() * f64::EPSILON;
            (right[j] - whole[j]).abs() <= tol[j].max(local)
        });
        if converged || depth >= MAX_DEPTH || mid <= s0 || mid >= s1 {
            nodes.push((mid, left));
            nodes.push((s1, right.clone()));
            return right;
        }
        let l = self.adaptive(s0, mid, start, left, tol, depth + 1, nodes);
        let (rw, _) = self.panel(mid, s1, &l);
        self.adaptive(mid, s1, &l, rw, tol, depth + 1, nodes)
    }
}

/// Solve `I₀ ≡ 1`, `dI_j = I_{j−1} α^j(dγ)` along the polyline.
pub fn iterated_form_integral(path: &PiecewisePath, forms: &[&dyn OneForm], emit_trajectory: bool) -> Result<IteratedIntegral, FormError> {
    let k = forms.len();
    if k == 0 || k > MAX_FORMS {
        return Err(FormError::FormCount(k));
    }
    let mut state = vec![0.0; k + 1];
    state[0] = 1.0;
    let mut traj = emit_trajectory.then(|| Trajectory {
        times: vec![0.0],
        values: vec![state[1..].to_vec()],
    });
    let mut nodes = Vec::new();
    for (t0, t1, a, b) in path.segments() {
        let active: Vec<Option<(f64, f64)>> = forms.iter().map(|f| f.active_interval(a, b)).collect();
        if active.iter().all(Option::is_none) {
            if let Some(tr) = traj.as_mut() {
                tr.times.push(t1);
                tr.values.push(state[1..].to_vec());
            }
            continue;
        }
        let mut cuts = vec![0.0, 1.0];
        for (f, iv) in forms.iter().zip(&active) {
            if let Some((lo, hi)) = *iv {
                cuts.extend([lo, hi]);
                cuts.extend(f.breakpoints(a, b));
            }
        }
        cuts.retain(|&t| (0.0..=1.0).contains(&t));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let nested = Nested { forms, a, b };
        nodes.clear();
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 {
                continue;
            }
            let idle = active.iter().all(|iv| iv.is_none_or(|(lo, hi)| hi <= s0 || lo >= s1));
            if idle {
                nodes.push((s1, state.clone()));
                continue;
            }
            let (whole, mass) = nested.panel(s0, s1, &state);
            let tol: Vec<f64> = mass.iter().map(|m| (QUADRATURE_TOL * m).max(QUADRATURE_ABS_TOL * (s1 - s0))).collect();
            state = nested.adaptive(s0, s1, &state, whole, &tol, 0, &mut nodes);
        }
        if let Some(tr) = traj.as_mut() {
            for (s, v) in nodes.drain(..) {
                let t = t0 + s * (t1 - t0);
                if t > *tr.times.last().expect("seeded") {
                    tr.times.push(t);
                    tr.values.push(v[1..].to_vec());
                }
            }
        }
    }
    Ok(IteratedIntegral {
        value: state[k],
        levels: state[1..].to_vec(),
        trajectory: traj,
    })
}

/// Tensor Chebyshev polynomial 1-form on the bounding square of a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialForm {
    pub center: Point,
    pub half_width: f64,
    pub degree: usize,
    /// Row-major `(degree+1)²` coefficients of `T_i(u) T_j(v)` for `f1`.
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

fn chebyshev(x: f64, n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(1.0);
    if n >= 1 {
        t.push(x);
    }
    for i in 2..=n {
        t.push(2.0 * x * t[i - 1] - t[i - 2]);
    }
    t
}

impl PolynomialForm {
    fn local(&self, p: Point) -> (f64, f64) {
        ((p.x - self.center.x) / self.half_width, (p.y - self.center.y) / self.half_width)
    }
}

impl OneForm for PolynomialForm {
    fn eval(&self, p: Point) -> [f64; 2] {
        let (u, v) = self.local(p);
        let n = self.degree + 1;
        let (tu, tv) = (chebyshev(u, self.degree), chebyshev(v, self.degree));
        let mut out = [0.0; 2];
        for i in 0..n {
            let (mut s1, mut s2) = (0.0, 0.0);
            for j in 0..n {
                s1 += self.c1[i * n + j] * tv[j];
                s2 += self.c2[i * n + j] * tv[j];
            }
            out[0] += tu[i] * s1;
            out[1] += tu[i] * s2;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialFit {
    pub form: PolynomialForm,
    /// Max of `|f1 − p1|` and `|f2 − p2|` over a validation grid inside the window.
    pub sup_error: f64,
    pub condition: f64,
}

/// Least-squares fit of both components on a Chebyshev tensor grid over the window's bounding square.
pub fn approximate_form_by_polynomials(form: &dyn OneForm, degree: usize, window: &RoundedSquare) -> Result<PolynomialFit, FormError> {
    if degree > MAX_DEGREE {
        return Err(FormError::Degree(degree));
    }
    let n = degree + 1;
    let m = 2 * n + 2;
    let nodes: Vec<f64> = (0..m)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / m as f64).cos())
        .collect();
    let vander = DMatrix::from_fn(m, n, |i, j| chebyshev(nodes[i], degree)[j]);
    let svd = vander.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    // Kronecker design: condition of the 2-D system is the square
    let condition = cond * cond;
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(FormError::IllConditioned(condition));
    }
    let pinv = svd.pseudo_inverse(0.0).map_err(|_| FormError::IllConditioned(f64::INFINITY))?;
    let (c, h) = (window.center, window.half_width);
    let mut f1 = DMatrix::zeros(m, m);
    let mut f2 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let v = form.eval(Point::new(c.x + h * nodes[i], c.y + h * nodes[j]));
            f1[(i, j)] = v[0];
            f2[(i, j)] = v[1];
        }
    }
    let solve = |f: &DMatrix<f64>| {
        let coef = &pinv * f * pinv.transpose();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| coef[ij]).collect::<Vec<_>>()
    };
    let poly = PolynomialForm {
        center: c,
        half_width: h,
        degree,
        c1: solve(&f1),
        c2: solve(&f2),
    };
    let grid = 4 * n + 1;
    let mut sup: f64 = 0.0;
    for i in 0..grid {
        for j in 0..grid {
            let p = Point::new(
                c.x + h * (2.0 * i as f64 / (grid - 1) as f64 - 1.0),
                c.y + h * (2.0 * j as f64 / (grid - 1) as f64 - 1.0),
            );
            if !window.contains(p) {
                continue;
            }
            let (f, q) = (form.eval(p), poly.eval(p));
            sup = sup.max((f[0] - q[0]).abs()).max((f[1] - q[1]).abs());
        }
    }
    Ok(PolynomialFit {
        form: poly,
        sup_error: sup,
        condition,
    })
}

impl fmt::Debug for dyn OneForm + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.support() {
            Some(s) => write!(f, "OneForm(support {:?})", s),
            None => write!(f, "OneForm"),
        }
    }
}
