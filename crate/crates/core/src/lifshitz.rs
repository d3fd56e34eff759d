//! Equilibrium Casimir pressure between a gold plate and a film-coated gold
//! plate, evaluated on the imaginary frequency axis.
//!
//! For each Matsubara frequency `ξu = 2πu·kB·T/ħ` and polarization the
//! integrand over the lateral wavevector is
//!
//! ```text
//! k∥ · (kB·T/π) · q0 · x/(1 − x),   x = r01 · r̃02 · exp(−2·q0·d)
//! ```
//!
//! with the `u = 0` term halved. The `k∥` integral is carried out in the
//! variable `y = 2·q0·d` (so that `k∥ dk∥ · q0 = y² dy / 8d³`), shifted to
//! start at zero and split into geometrically graded Gauss-Legendre panels.
//! The gap derivative is accumulated in the same pass from
//! `∂/∂d [x/(1 − x)] = −2·q0 · x/(1 − x)²`.
//!
//! Attractive pressure is reported as a positive number.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::materials::{consts, gold_drude, FilmSample, LorentzDrudeModel, StaticPermittivity};
use crate::quadrature::GaussLegendre;
use crate::textio::fmt_f64;

/// Room temperature used throughout, in kelvin.
pub const ROOM_TEMPERATURE: f64 = 300.0;

/// Upper end of the shifted `y` integration range; `e^{-60}` is far below any
/// usable tolerance even after the `y²` weight.
pub const Y_MAX: f64 = 60.0;

/// Number of geometrically graded panels on `[0, Y_MAX]` (ratio 4).
pub const Y_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    /// Transverse magnetic.
    P,
    /// Transverse electric.
    S,
}

/// Gold plate, vacuum gap, film of thickness `t` on a gold substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmStack {
    /// Layer 1, the bare plate across the gap.
    pub plate: LorentzDrudeModel,
    /// Layer 2.
    pub film: LorentzDrudeModel,
    /// Layer 3, backing the film.
    pub substrate: LorentzDrudeModel,
    /// Film thickness in meters.
    pub thickness: f64,
    /// Kelvin.
    pub temperature: f64,
}

impl FilmStack {
    pub fn new(
        plate: LorentzDrudeModel,
        film: LorentzDrudeModel,
        substrate: LorentzDrudeModel,
        thickness: f64,
        temperature: f64,
    ) -> Result<Self> {
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(Error::domain(format!(
                "film thickness must be positive, got {thickness}"
            )));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(FilmStack {
            plate,
            film,
            substrate,
            thickness,
            temperature,
        })
    }

    /// The film of `sample` between Drude gold plates at room temperature.
    pub fn on_gold(sample: &FilmSample) -> Self {
        FilmStack {
            plate: gold_drude(),
            film: sample.film.clone(),
            substrate: gold_drude(),
            thickness: sample.thickness,
            temperature: ROOM_TEMPERATURE,
        }
    }
}

/// How the lateral-wavevector integral is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KparScheme {
    /// Fixed composite Gauss-Legendre rule on graded panels in `y`.
    GaussLegendreOnY,
    /// Recursive bisection comparing `n`- and `2n`-point rules per panel.
    Adaptive,
}

impl KparScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            KparScheme::GaussLegendreOnY => "gauss-legendre-on-y",
            KparScheme::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gauss-legendre-on-y" => Ok(KparScheme::GaussLegendreOnY),
            "adaptive" => Ok(KparScheme::Adaptive),
            other => Err(Error::config(format!("unknown k-parallel scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Relative tolerance for the Matsubara truncation and adaptive panels.
    pub rel_tol: f64,
    /// Successive negligible Matsubara terms required before stopping.
    pub matsubara_consecutive_small: usize,
    pub kpar_scheme: KparScheme,
    /// Total Gauss-Legendre nodes per Matsubara term, spread evenly over the
    /// `Y_PANELS` panels (must be a multiple of `Y_PANELS`).
    pub gl_nodes: usize,
    /// Hard cap on Matsubara terms.
    pub max_matsubara_terms: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-8,
            matsubara_consecutive_small: 3,
            kpar_scheme: KparScheme::GaussLegendreOnY,
            gl_nodes: 64,
            max_matsubara_terms: 1_000_000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(Error::config(format!(
                "rel_tol must lie in (0, 1e-2), got {}",
                self.rel_tol
            )));
        }
        if self.gl_nodes < 16 || self.gl_nodes % Y_PANELS != 0 {
            return Err(Error::config(format!(
                "gl_nodes must be ≥ 16 and a multiple of {Y_PANELS}, got {}",
                self.gl_nodes
            )));
        }
        if self.matsubara_consecutive_small == 0 || self.max_matsubara_terms == 0 {
            return Err(Error::config("Matsubara term counts must be positive"));
        }
        Ok(())
    }

    /// Same configuration with doubled node count and a 100× tighter tolerance.
    pub fn refined(&self) -> Self {
        QuadratureConfig {
            rel_tol: self.rel_tol * 1e-2,
            gl_nodes: self.gl_nodes * 2,
            ..*self
        }
    }
}

/// `ξu = 2π·u·kB·T/ħ` in rad/s.
pub fn matsubara_xi(u: u64, temperature: f64) -> f64 {
    2.0 * PI * u as f64 * consts::KB * temperature / consts::HBAR
}

/// `√(ε·(ξ/c)² + k∥²)`; pass `eps = 1` for vacuum.
#[inline]
pub fn q_perp(eps: f64, xi: f64, kpar: f64) -> f64 {
    let k0 = xi / consts::C;
    (eps * k0 * k0 + kpar * kpar).sqrt()
}

/// `[rp, rs]` from medium `a` into medium `b`, written so that no difference
/// of nearly equal products appears when both permittivities approach 1.
#[inline]
fn fresnel_pair(eps_a: f64, eps_b: f64, qa: f64, qb: f64, k0sq: f64, kpar2: f64) -> [f64; 2] {
    let de = eps_b - eps_a;
    let dp = eps_b * qa + eps_a * qb;
    let ds = qa + qb;
    [
        de * (eps_a * eps_b * k0sq + kpar2 * (eps_a + eps_b)) / (dp * dp),
        -de * k0sq / (ds * ds),
    ]
}

/// Fresnel coefficient from medium `a` into medium `b` on the imaginary axis.
pub fn fresnel_r(eps_a: f64, eps_b: f64, xi: f64, kpar: f64, pol: Polarization) -> Result<f64> {
    if !(eps_a >= 1.0 && eps_b >= 1.0) {
        return Err(Error::domain(format!(
            "imaginary-axis permittivities must be ≥ 1 (got {eps_a}, {eps_b})"
        )));
    }
    if !(xi >= 0.0 && kpar >= 0.0) {
        return Err(Error::domain("ξ and k∥ must be non-negative"));
    }
    if xi == 0.0 && kpar == 0.0 {
        return Err(Error::domain("ξ = k∥ = 0: both normal wavevectors vanish"));
    }
    let qa = q_perp(eps_a, xi, kpar);
    let qb = q_perp(eps_b, xi, kpar);
    let k0 = xi / consts::C;
    let [p, s] = fresnel_pair(eps_a, eps_b, qa, qb, k0 * k0, kpar * kpar);
    Ok(match pol {
        Polarization::P => p,
        Polarization::S => s,
    })
}

/// `rp` between two media in the `ξ → 0` limit (where all `q` equal `k∥`).
fn static_rp(a: StaticPermittivity, b: StaticPermittivity) -> f64 {
    use StaticPermittivity::*;
    match (a, b) {
        (Finite(ea), Finite(eb)) => (eb - ea) / (eb + ea),
        (Finite(_), Conducting(_)) => 1.0,
        (Conducting(_), Finite(_)) => -1.0,
        (Conducting(wa), Conducting(wb)) => (wb - wa) / (wb + wa),
    }
}

#[inline]
fn compose(r02: f64, r23: f64, decay: f64) -> f64 {
    (r02 + r23 * decay) / (1.0 + r02 * r23 * decay)
}

/// Effective reflection coefficient `r̃02` of the film backed by the substrate,
/// seen from the vacuum gap.
pub fn film_reflection(stack: &FilmStack, xi: f64, kpar: f64, pol: Polarization) -> Result<f64> {
    if !(xi >= 0.0 && kpar >= 0.0) {
        return Err(Error::domain("ξ and k∥ must be non-negative"));
    }
    if xi == 0.0 && kpar == 0.0 {
        return Err(Error::domain("ξ = k∥ = 0: both normal wavevectors vanish"));
    }
    if xi == 0.0 {
        let slice = StackSlice::new(stack, 0.0);
        let [p, s] = slice.film_side(kpar * kpar, kpar);
        return Ok(match pol {
            Polarization::P => p,
            Polarization::S => s,
        });
    }
    let e2 = stack.film.eps_imag_axis(xi)?;
    let e3 = stack.substrate.eps_imag_axis(xi)?;
    let r02 = fresnel_r(1.0, e2, xi, kpar, pol)?;
    let r23 = fresnel_r(e2, e3, xi, kpar, pol)?;
    let decay = (-2.0 * q_perp(e2, xi, kpar) * stack.thickness).exp();
    Ok(compose(r02, r23, decay))
}

/// Pressure between perfect conductors at zero temperature, `ħcπ²/(240 d⁴)`.
pub fn pec_pressure(d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain(format!("gap must be positive, got {d}")));
    }
    Ok(consts::HBAR * consts::C * PI * PI / (240.0 * d.powi(4)))
}

/// Two reflecting bodies facing each other across a vacuum gap.
pub trait PlatePair {
    type Slice: ReflectionSlice;

    fn temperature(&self) -> f64;

    /// Reflection data at one imaginary frequency; `xi = 0` requests the
    /// static limit.
    fn slice(&self, xi: f64) -> Result<Self::Slice>;
}

/// Reflection data for a fixed imaginary frequency.
pub trait ReflectionSlice {
    /// `r_left · r_right` for `[p, s]` at lateral wavevector squared `kpar2`
    /// with vacuum normal wavevector `q0`.
    fn products(&self, kpar2: f64, q0: f64) -> [f64; 2];
}

/// Frequency slice of a [`FilmStack`].
#[derive(Debug, Clone, Copy)]
pub enum StackSlice {
    /// `ξ = 0`: only `p` survives; `rs` vanishes because every `q` equals `k∥`.
    Static {
        r01p: f64,
        r02p: f64,
        r23p: f64,
        thickness: f64,
    },
    Dynamic {
        k0sq: f64,
        eps1: f64,
        eps2: f64,
        eps3: f64,
        thickness: f64,
    },
}

impl StackSlice {
    fn new(stack: &FilmStack, xi: f64) -> Self {
        if xi == 0.0 {
            let vac = StaticPermittivity::Finite(1.0);
            let s1 = stack.plate.static_permittivity();
            let s2 = stack.film.static_permittivity();
            let s3 = stack.substrate.static_permittivity();
            StackSlice::Static {
                r01p: static_rp(vac, s1),
                r02p: static_rp(vac, s2),
                r23p: static_rp(s2, s3),
                thickness: stack.thickness,
            }
        } else {
            let k0 = xi / consts::C;
            StackSlice::Dynamic {
                k0sq: k0 * k0,
                eps1: stack.plate.eps_imag_axis_unchecked(xi),
                eps2: stack.film.eps_imag_axis_unchecked(xi),
                eps3: stack.substrate.eps_imag_axis_unchecked(xi),
                thickness: stack.thickness,
            }
        }
    }

    /// `[r̃02 p, r̃02 s]`.
    #[inline]
    fn film_side(&self, kpar2: f64, q0: f64) -> [f64; 2] {
        match *self {
            StackSlice::Static {
                r02p,
                r23p,
                thickness,
                ..
            } => {
                let decay = (-2.0 * kpar2.sqrt() * thickness).exp();
                [compose(r02p, r23p, decay), 0.0]
            }
            StackSlice::Dynamic {
                k0sq,
                eps2,
                eps3,
                thickness,
                ..
            } => {
                let q2 = (kpar2 + eps2 * k0sq).sqrt();
                let q3 = (kpar2 + eps3 * k0sq).sqrt();
                let decay = (-2.0 * q2 * thickness).exp();
                let [r02p, r02s] = fresnel_pair(1.0, eps2, q0, q2, k0sq, kpar2);
                let [r23p, r23s] = fresnel_pair(eps2, eps3, q2, q3, k0sq, kpar2);
                [compose(r02p, r23p, decay), compose(r02s, r23s, decay)]
            }
        }
    }
}

impl ReflectionSlice for StackSlice {
    #[inline]
    fn products(&self, kpar2: f64, q0: f64) -> [f64; 2] {
        let [fp, fs] = self.film_side(kpar2, q0);
        match *self {
            StackSlice::Static { r01p, .. } => [r01p * fp, 0.0],
            StackSlice::Dynamic { k0sq, eps1, .. } => {
                let q1 = (kpar2 + eps1 * k0sq).sqrt();
                let [r01p, r01s] = fresnel_pair(1.0, eps1, q0, q1, k0sq, kpar2);
                [r01p * fp, r01s * fs]
            }
        }
    }
}

impl PlatePair for FilmStack {
    type Slice = StackSlice;

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn slice(&self, xi: f64) -> Result<StackSlice> {
        if !(xi >= 0.0) {
            return Err(Error::domain("imaginary frequency must be non-negative"));
        }
        Ok(StackSlice::new(self, xi))
    }
}

/// Ideal mirrors (`rp = +1`, `rs = −1` on both sides), the normalization
/// reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfectMirrors {
    pub temperature: f64,
}

impl Default for PerfectMirrors {
    fn default() -> Self {
        PerfectMirrors {
            temperature: ROOM_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnitReflection;

impl ReflectionSlice for UnitReflection {
    #[inline]
    fn products(&self, _kpar2: f64, _q0: f64) -> [f64; 2] {
        [1.0, 1.0]
    }
}

impl PlatePair for PerfectMirrors {
    type Slice = UnitReflection;

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn slice(&self, _xi: f64) -> Result<UnitReflection> {
        Ok(UnitReflection)
    }
}

/// Pressure and its gap derivative at one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressurePoint {
    /// Gap in meters.
    pub gap: f64,
    /// Attractive pressure magnitude, Pa.
    pub pressure: f64,
    /// `∂P/∂d`, Pa/m.
    pub dpressure_dd: f64,
    /// Matsubara terms summed.
    pub terms: usize,
}

impl PressurePoint {
    /// `P̃ = P / P_PEC`.
    pub fn normalized(&self) -> f64 {
        self.pressure / pec_pressure(self.gap).expect("gap validated")
    }

    /// `∂P̃/∂z` with `z` in micrometers.
    pub fn dnormalized_dz_um(&self) -> f64 {
        let pp = pec_pressure(self.gap).expect("gap validated");
        let per_meter = self.dpressure_dd / pp + 4.0 * self.pressure / (self.gap * pp);
        per_meter * 1e-6
    }
}

/// Panel boundaries in the shifted variable `s = y − y_min`.
fn panel_edges() -> [f64; Y_PANELS + 1] {
    let mut edges = [0.0; Y_PANELS + 1];
    for (k, e) in edges.iter_mut().enumerate().skip(1) {
        *e = Y_MAX / 4f64.powi((Y_PANELS - k) as i32);
    }
    edges
}

/// Precomputed `(s, w)` pairs for the fixed composite rule.
#[derive(Debug, Clone)]
struct FixedRule {
    nodes: Vec<(f64, f64)>,
}

impl FixedRule {
    fn new(gl_nodes: usize) -> Self {
        let rule = GaussLegendre::new(gl_nodes / Y_PANELS);
        let edges = panel_edges();
        let nodes = edges
            .windows(2)
            .flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>())
            .collect();
        FixedRule { nodes }
    }
}

/// Integrand accumulator for one Matsubara term: returns
/// `(Σ_pol y²·x/(1−x), Σ_pol y³·x/(1−x)²)` at shifted coordinate `s`.
#[inline]
fn integrand<S: ReflectionSlice>(slice: &S, s: f64, y_min: f64, d: f64) -> Result<[f64; 2]> {
    let y = y_min + s;
    let kpar2 = s * (2.0 * y_min + s) / (4.0 * d * d);
    let q0 = y / (2.0 * d);
    let products = slice.products(kpar2, q0);
    let e = (-y).exp();
    let em1 = -(-y).exp_m1();
    let mut f = 0.0;
    let mut g = 0.0;
    for r in products {
        let x = r * e;
        // 1 − r·e^{−y} written so that r → 1, y → 0 keeps full precision
        let one_minus_x = (1.0 - r) + r * em1;
        if !(one_minus_x > 0.0) {
            return Err(Error::Invariant(format!(
                "reflection product {r} gives x = {x} ≥ 1 at y = {y}"
            )));
        }
        let ratio = x / one_minus_x;
        f += ratio;
        g += ratio / one_minus_x;
    }
    Ok([y * y * f, y * y * y * g])
}

fn fixed_term<S: ReflectionSlice>(
    slice: &S,
    rule: &FixedRule,
    y_min: f64,
    d: f64,
) -> Result<[f64; 2]> {
    let mut acc = [0.0; 2];
    for &(s, w) in &rule.nodes {
        let [f, g] = integrand(slice, s, y_min, d)?;
        acc[0] += w * f;
        acc[1] += w * g;
    }
    Ok(acc)
}

struct AdaptiveRule {
    coarse: GaussLegendre,
    fine: GaussLegendre,
    rel_tol: f64,
}

const ADAPTIVE_MAX_DEPTH: usize = 40;

impl AdaptiveRule {
    fn new(quad: &QuadratureConfig) -> Self {
        let n = (quad.gl_nodes / Y_PANELS).max(8);
        AdaptiveRule {
            coarse: GaussLegendre::new(n),
            fine: GaussLegendre::new(2 * n),
            rel_tol: quad.rel_tol,
        }
    }

    fn panel<S: ReflectionSlice>(
        &self,
        slice: &S,
        a: f64,
        b: f64,
        y_min: f64,
        d: f64,
    ) -> Result<([f64; 2], [f64; 2])> {
        let mut coarse = [0.0; 2];
        let mut fine = [0.0; 2];
        for (s, w) in self.coarse.mapped(a, b) {
            let v = integrand(slice, s, y_min, d)?;
            coarse[0] += w * v[0];
            coarse[1] += w * v[1];
        }
        for (s, w) in self.fine.mapped(a, b) {
            let v = integrand(slice, s, y_min, d)?;
            fine[0] += w * v[0];
            fine[1] += w * v[1];
        }
        Ok((coarse, fine))
    }

    fn term<S: ReflectionSlice>(&self, slice: &S, y_min: f64, d: f64) -> Result<[f64; 2]> {
        // scale estimate from the whole range, used as the absolute target
        let edges = panel_edges();
        let mut scale = [0.0f64; 2];
        let mut stack: Vec<(f64, f64, usize)> = Vec::new();
        for w in edges.windows(2) {
            let (_, fine) = self.panel(slice, w[0], w[1], y_min, d)?;
            scale[0] += fine[0].abs();
            scale[1] += fine[1].abs();
            stack.push((w[0], w[1], 0));
        }
        let mut total = [0.0; 2];
        let mut evaluations = 0usize;
        while let Some((a, b, depth)) = stack.pop() {
            let (coarse, fine) = self.panel(slice, a, b, y_min, d)?;
            evaluations += 1;
            let ok = (0..2).all(|k| (fine[k] - coarse[k]).abs() <= self.rel_tol * 1e-2 * scale[k]);
            if ok {
                total[0] += fine[0];
                total[1] += fine[1];
            } else if depth >= ADAPTIVE_MAX_DEPTH {
                return Err(Error::numeric(
                    "adaptive k∥ quadrature exceeded its bisection budget",
                    total[0],
                    evaluations,
                ));
            } else {
                let mid = 0.5 * (a + b);
                stack.push((a, mid, depth + 1));
                stack.push((mid, b, depth + 1));
            }
        }
        Ok(total)
    }
}

enum KparRule {
    Fixed(FixedRule),
    Adaptive(AdaptiveRule),
}

impl KparRule {
    fn new(quad: &QuadratureConfig) -> Self {
        match quad.kpar_scheme {
            KparScheme::GaussLegendreOnY => KparRule::Fixed(FixedRule::new(quad.gl_nodes)),
            KparScheme::Adaptive => KparRule::Adaptive(AdaptiveRule::new(quad)),
        }
    }

    fn term<S: ReflectionSlice>(&self, slice: &S, y_min: f64, d: f64) -> Result<[f64; 2]> {
        match self {
            KparRule::Fixed(rule) => fixed_term(slice, rule, y_min, d),
            KparRule::Adaptive(rule) => rule.term(slice, y_min, d),
        }
    }
}

/// Reusable evaluator holding the precomputed quadrature rule.
pub struct LifshitzSolver {
    quad: QuadratureConfig,
    rule: KparRule,
}

impl LifshitzSolver {
    pub fn new(quad: &QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        Ok(LifshitzSolver {
            quad: *quad,
            rule: KparRule::new(quad),
        })
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// Pressure and `∂P/∂d` at gap `d` (meters).
    pub fn evaluate<P: PlatePair>(&self, plates: &P, d: f64) -> Result<PressurePoint> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::domain(format!("gap must be positive, got {d}")));
        }
        let temperature = plates.temperature();
        let tol = self.quad.rel_tol;
        let mut sum = [0.0f64; 2];
        let mut prev = [0.0f64; 2];
        let mut small_run = 0usize;
        let mut u = 0u64;
        loop {
            if u as usize >= self.quad.max_matsubara_terms {
                let partial = temperature * consts::KB / (PI * 8.0 * d.powi(3)) * sum[0];
                return Err(Error::numeric(
                    format!("Matsubara series not converged at d = {d:e} m"),
                    partial,
                    u as usize,
                ));
            }
            let xi = matsubara_xi(u, temperature);
            let slice = plates.slice(xi)?;
            let y_min = 2.0 * xi * d / consts::C;
            let mut term = self.rule.term(&slice, y_min, d)?;
            if u == 0 {
                term[0] *= 0.5;
                term[1] *= 0.5;
            }
            if !(term[0].is_finite() && term[1].is_finite()) {
                return Err(Error::numeric(
                    format!("non-finite Matsubara term u = {u} at d = {d:e} m"),
                    sum[0],
                    u as usize,
                ));
            }
            sum[0] += term[0];
            sum[1] += term[1];

            let negligible = (0..2).all(|k| {
                let t = term[k].abs();
                let bound = tol * sum[k].abs();
                if t > bound {
                    return false;
                }
                // geometric tail estimate from the local decay ratio
                let p = prev[k].abs();
                let ratio = if p > 0.0 { t / p } else { 0.0 };
                ratio < 1.0 && t * ratio / (1.0 - ratio) <= bound
            });
            prev = term;
            small_run = if negligible && u > 0 { small_run + 1 } else { 0 };
            u += 1;
            if small_run >= self.quad.matsubara_consecutive_small {
                break;
            }
        }
        let prefactor = temperature * consts::KB / PI;
        Ok(PressurePoint {
            gap: d,
            pressure: prefactor * sum[0] / (8.0 * d.powi(3)),
            dpressure_dd: -prefactor * sum[1] / (8.0 * d.powi(4)),
            terms: u as usize,
        })
    }
}

/// Casimir pressure (Pa, attractive positive) for `stack` at gap `d`.
pub fn casimir_pressure(stack: &FilmStack, d: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(LifshitzSolver::new(quad)?.evaluate(stack, d)?.pressure)
}

/// `P / P_PEC`.
pub fn normalized_pressure(stack: &FilmStack, d: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(LifshitzSolver::new(quad)?.evaluate(stack, d)?.normalized())
}

/// `∂P̃/∂z` per micrometer, from the analytic gap derivative.
pub fn dpnorm_dz(stack: &FilmStack, d: f64, quad: &QuadratureConfig) -> Result<f64> {
    Ok(LifshitzSolver::new(quad)?
        .evaluate(stack, d)?
        .dnormalized_dz_um())
}

/// Sampled force curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceCurve {
    /// Gaps in meters, ascending.
    pub gaps: Vec<f64>,
    pub pressure: Vec<f64>,
    pub p_norm: Vec<f64>,
    /// Per micrometer.
    pub dpnorm_dz: Vec<f64>,
}

pub const FORCE_CURVE_HEADER: &str = "d_nm,P_Pa,P_norm,dPnorm_dz_per_um";

impl ForceCurve {
    pub fn compute<P: PlatePair>(plates: &P, gaps: &[f64], quad: &QuadratureConfig) -> Result<Self> {
        let solver = LifshitzSolver::new(quad)?;
        let mut curve = ForceCurve {
            gaps: Vec::with_capacity(gaps.len()),
            pressure: Vec::with_capacity(gaps.len()),
            p_norm: Vec::with_capacity(gaps.len()),
            dpnorm_dz: Vec::with_capacity(gaps.len()),
        };
        for &d in gaps {
            let point = solver.evaluate(plates, d)?;
            curve.gaps.push(d);
            curve.pressure.push(point.pressure);
            curve.p_norm.push(point.normalized());
            curve.dpnorm_dz.push(point.dnormalized_dz_um());
        }
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// CSV with `# ` comment lines, then [`FORCE_CURVE_HEADER`] and one row per gap.
    pub fn write_csv(&self, mut out: impl Write, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{FORCE_CURVE_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(self.gaps[i] * 1e9),
                fmt_f64(self.pressure[i]),
                fmt_f64(self.p_norm[i]),
                fmt_f64(self.dpnorm_dz[i])
            )?;
        }
        Ok(())
    }
}
