//! Nash and restricted Nash population states, the limit set `𝒴°`,
//! classification of system-state equilibria, and a grid oracle for zeros
//! of the vector field.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::dynamics::vector_field;
use crate::error::{Error, Result};
use crate::games::PopulationGame;
use crate::linalg::solve_affine;
use crate::mechanisms::{ImitationMechanism, RateProfile};
use crate::network::CommunityNetwork;
use crate::sampling;
use crate::scalar::Scalar;
use crate::state::{balance_gap, PopulationState, SystemState};

/// Tolerance on the Nash inequality `min_{S} r ≥ max_{∉S} r`.
pub const NASH_SLACK: f64 = 1e-9;
/// Entries above this count as played, and reward gaps and balance gaps
/// below it count as zero, when classifying numerically found states.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-6;
const CLIP: f64 = 1e-12;

/// Set of restricted Nash states sharing one support.
#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumSet<T> {
    Point(Vec<T>),
    /// `{base + Σ_k t_k directions[k]} ∩ 𝒴`, a polytope given with its
    /// vertices.
    Continuum {
        base: Vec<T>,
        directions: Vec<Vec<T>>,
        vertices: Vec<Vec<T>>,
    },
}

impl<T: Scalar> EquilibriumSet<T> {
    /// The point itself or the vertices of the continuum.
    pub fn points(&self) -> Vec<Vec<T>> {
        match self {
            EquilibriumSet::Point(p) => vec![p.clone()],
            EquilibriumSet::Continuum { vertices, .. } => vertices.clone(),
        }
    }

    /// `‖·‖∞` distance from `y`. Exact for points and segments; for
    /// continua of higher dimension the minimum over vertices and the
    /// segments joining them, an upper bound.
    pub fn distance(&self, y: &[T]) -> T {
        match self {
            EquilibriumSet::Point(p) => inf_dist(y, p),
            EquilibriumSet::Continuum { vertices, .. } => {
                let mut best = T::infinity();
                for (a, va) in vertices.iter().enumerate() {
                    best = best.min(inf_dist(y, va));
                    for vb in &vertices[a + 1..] {
                        best = best.min(segment_distance(y, va, vb));
                    }
                }
                best
            }
        }
    }
}

fn inf_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (u, v)| m.max((*u - *v).abs()))
}

/// Exact `min_{s∈[0,1]} ‖y − (p + s(q − p))‖∞`. The objective is convex and
/// piecewise linear, so its minimum sits at an endpoint or where two of the
/// lines `±(a_i − s v_i)` cross.
fn segment_distance<T: Scalar>(y: &[T], p: &[T], q: &[T]) -> T {
    let a: Vec<T> = y.iter().zip(p).map(|(u, v)| *u - *v).collect();
    let v: Vec<T> = q.iter().zip(p).map(|(u, w)| *u - *w).collect();
    let f = |s: T| {
        a.iter()
            .zip(&v)
            .fold(T::zero(), |m, (ai, vi)| m.max((*ai - s * *vi).abs()))
    };
    let mut best = f(T::zero()).min(f(T::one()));
    let n = a.len();
    for i in 0..n {
        for j in 0..n {
            for sign in [T::one(), -T::one()] {
                // a_i − s v_i = sign·(a_j − s v_j)
                let den = v[i] - sign * v[j];
                if den != T::zero() {
                    let s = (a[i] - sign * a[j]) / den;
                    if s > T::zero() && s < T::one() {
                        best = best.min(f(s));
                    }
                }
            }
        }
    }
    best
}

/// Restricted Nash states whose relative interior has support `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedNashSet<T> {
    pub support: Vec<usize>,
    pub set: EquilibriumSet<T>,
    /// Whether every state of the set is a Nash equilibrium.
    pub nash: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration<T> {
    pub sets: Vec<RestrictedNashSet<T>>,
    /// False when the game has no affine form and the numerical fallback
    /// was used; the list may then be incomplete.
    pub exact: bool,
}

impl<T: Scalar> Enumeration<T> {
    /// Representative population states: points and continuum vertices.
    pub fn points(&self) -> Vec<PopulationState<T>> {
        let mut out: Vec<Vec<T>> = Vec::new();
        for s in &self.sets {
            for p in s.set.points() {
                if !out.iter().any(|q| inf_dist(q, &p) <= T::tol(1e-12)) {
                    out.push(p);
                }
            }
        }
        out.into_iter()
            .map(PopulationState::from_vec_unchecked)
            .collect()
    }
}

fn supports(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1u32 << n)).map(move |mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

/// Embeds `y_S` into a full vector, clipping `[−1e-12, 0)` to 0. `None`
/// when an entry is more negative than that.
fn embed<T: Scalar>(n: usize, support: &[usize], ys: &[T]) -> Option<Vec<T>> {
    let mut y = vec![T::zero(); n];
    for (&i, &v) in support.iter().zip(ys) {
        if v < -T::tol(CLIP) {
            return None;
        }
        y[i] = v.max(T::zero());
    }
    let s: T = y.iter().copied().sum();
    Some(y.into_iter().map(|v| v / s).collect())
}

/// Every nonempty support `S` is solved for `r_i = r_j` on `S`, `Σ y_S = 1`
/// and `y = 0` off `S`. Exact for affine games; other games fall back to
/// damped Newton from several starts per support.
pub fn restricted_nash_enumerate<T: Scalar>(game: &PopulationGame<T>) -> Result<Enumeration<T>> {
    let n = game.n_actions();
    let mut sets = Vec::new();
    let exact = game.affine_form().is_some();
    for s in supports(n) {
        let found = match game.affine_form() {
            Some(form) => affine_support(&form.a, &form.b, n, &s),
            None => numeric_support(game, &s),
        };
        for set in found {
            let nash = set.points().iter().all(|p| is_nash(game, p));
            sets.push(RestrictedNashSet {
                support: s.clone(),
                set,
                nash,
            });
        }
    }
    Ok(Enumeration { sets, exact })
}

fn actual_support<T: Scalar>(y: &[T]) -> Vec<usize> {
    (0..y.len()).filter(|&i| y[i] > T::zero()).collect()
}

fn affine_support<T: Scalar>(
    a: &Array2<T>,
    b: &Array1<T>,
    n: usize,
    s: &[usize],
) -> Vec<EquilibriumSet<T>> {
    let k = s.len();
    // Rows: r_{s[m]} − r_{s[0]} = 0 for m ≥ 1, then Σ y_S = 1.
    let mut lhs = Array2::zeros((k, k));
    let mut rhs = Array1::zeros(k);
    for m in 1..k {
        for (c, &j) in s.iter().enumerate() {
            lhs[[m - 1, c]] = a[[s[m], j]] - a[[s[0], j]];
        }
        rhs[m - 1] = b[s[0]] - b[s[m]];
    }
    for c in 0..k {
        lhs[[k - 1, c]] = T::one();
    }
    rhs[k - 1] = T::one();
    let Some(sol) = solve_affine(&lhs, &rhs, T::tol(1e-10)) else {
        return Vec::new();
    };
    let d = sol.basis.ncols();
    if d == 0 {
        let Some(y) = embed(n, s, sol.particular.as_slice().expect("contiguous")) else {
            return Vec::new();
        };
        // Solutions on a smaller face are reported with that face.
        if actual_support(&y) != s {
            return Vec::new();
        }
        return vec![EquilibriumSet::Point(y)];
    }
    // Vertices of {t : p + B t ≥ 0}: pick d active constraints at a time.
    let mut vertices: Vec<Vec<T>> = Vec::new();
    for active in combinations(k, d) {
        let sub = Array2::from_shape_fn((d, d), |(r, c)| sol.basis[[active[r], c]]);
        let rhs = Array1::from_shape_fn(d, |r| -sol.particular[active[r]]);
        let Some(t) = solve_affine(&sub, &rhs, T::tol(1e-10)) else {
            continue;
        };
        if t.basis.ncols() != 0 {
            continue;
        }
        let ys = &sol.particular + &sol.basis.dot(&t.particular);
        if let Some(y) = embed(n, s, ys.as_slice().expect("contiguous")) {
            if !vertices.iter().any(|v| inf_dist(v, &y) <= T::tol(1e-12)) {
                vertices.push(y);
            }
        }
    }
    if vertices.is_empty() {
        return Vec::new();
    }
    vertices.sort_by(|p, q| lex_cmp(p, q));
    // A continuum whose vertices all coincide collapsed onto a point.
    if vertices.len() == 1 {
        let y = vertices.pop().expect("one vertex");
        return if actual_support(&y) == s {
            vec![EquilibriumSet::Point(y)]
        } else {
            Vec::new()
        };
    }
    let base = embed_raw(n, s, sol.particular.as_slice().expect("contiguous"));
    let directions = (0..d)
        .map(|c| embed_raw(n, s, &sol.basis.column(c).to_vec()))
        .collect();
    vec![EquilibriumSet::Continuum {
        base,
        directions,
        vertices,
    }]
}

fn embed_raw<T: Scalar>(n: usize, s: &[usize], v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (&i, &x) in s.iter().zip(v) {
        out[i] = x;
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.partial_cmp(v) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Damped Newton on the reward ties of one face, from a fixed set of
/// starts. Best effort: the result may miss equilibria.
fn numeric_support<T: Scalar>(game: &PopulationGame<T>, s: &[usize]) -> Vec<EquilibriumSet<T>> {
    let n = game.n_actions();
    let k = s.len();
    if k == 1 {
        return vec![EquilibriumSet::Point(embed_raw(n, s, &[T::one()]))];
    }
    let residual = |u: &[T]| -> Vec<T> {
        let mut ys: Vec<T> = u.to_vec();
        ys.push(T::one() - u.iter().copied().sum::<T>());
        let y = embed_raw(n, s, &ys);
        let r = game.rewards(&y);
        (1..k).map(|m| r[s[m]] - r[s[0]]).collect()
    };
    let norm = |v: &[T]| v.iter().fold(T::zero(), |a, x| a.max(x.abs()));
    let mut rng = sampling::rng(0xface ^ s.iter().fold(0u64, |a, i| a * 31 + *i as u64));
    let mut found: Vec<Vec<T>> = Vec::new();
    for _ in 0..16 {
        let start: Vec<T> = sampling::interior_simplex(&mut rng, k, T::lit(0.01));
        let mut u: Vec<T> = start[..k - 1].to_vec();
        let mut g = residual(&u);
        for _ in 0..100 {
            if norm(&g) <= T::tol(1e-12) {
                break;
            }
            let h = T::tol(1e-7);
            let mut jac = Array2::zeros((k - 1, k - 1));
            for c in 0..k - 1 {
                let mut up = u.clone();
                up[c] += h;
                let mut dn = u.clone();
                dn[c] -= h;
                let (gu, gd) = (residual(&up), residual(&dn));
                for r in 0..k - 1 {
                    jac[[r, c]] = (gu[r] - gd[r]) / (h + h);
                }
            }
            let rhs = Array1::from_iter(g.iter().map(|v| -*v));
            let Some(step) = solve_affine(&jac, &rhs, T::tol(1e-12)) else {
                break;
            };
            let mut lam = T::one();
            let mut improved = false;
            for _ in 0..30 {
                let cand: Vec<T> = u
                    .iter()
                    .zip(step.particular.iter())
                    .map(|(a, d)| *a + lam * *d)
                    .collect();
                let gc = residual(&cand);
                if norm(&gc) < norm(&g) {
                    u = cand;
                    g = gc;
                    improved = true;
                    break;
                }
                lam /= T::lit(2.0);
            }
            if !improved {
                break;
            }
        }
        if norm(&g) > T::tol(1e-10) {
            continue;
        }
        let mut ys = u.clone();
        ys.push(T::one() - u.iter().copied().sum::<T>());
        if let Some(y) = embed(n, s, &ys) {
            if actual_support(&y) == s && !found.iter().any(|p| inf_dist(p, &y) <= T::tol(1e-8)) {
                found.push(y);
            }
        }
    }
    found.into_iter().map(EquilibriumSet::Point).collect()
}

fn is_nash<T: Scalar>(game: &PopulationGame<T>, y: &[T]) -> bool {
    let r = game.rewards(y);
    let sup = actual_support(y);
    let min_in = sup.iter().map(|&i| r[i]).fold(T::infinity(), T::min);
    let max_out = (0..y.len())
        .filter(|i| !sup.contains(i))
        .map(|i| r[i])
        .fold(T::neg_infinity(), T::max);
    min_in >= max_out - T::lit(NASH_SLACK)
}

/// Keeps the candidates whose played actions all earn at least the best
/// unplayed reward, up to a slack of 1e-9.
pub fn nash_filter<T: Scalar>(
    game: &PopulationGame<T>,
    candidates: &[PopulationState<T>],
) -> Vec<PopulationState<T>> {
    candidates
        .iter()
        .filter(|y| is_nash(game, y.as_slice()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComponentKind {
    Nash,
    /// Restricted Nash states with the given action unplayed, included
    /// because that face contains a Nash equilibrium.
    Face(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct YCircle<T> {
    pub components: Vec<(ComponentKind, EquilibriumSet<T>)>,
}

impl<T: Scalar> YCircle<T> {
    pub fn distance(&self, y: &[T]) -> T {
        self.components
            .iter()
            .map(|(_, s)| s.distance(y))
            .fold(T::infinity(), T::min)
    }
}

/// Nash equilibria together with every face `{y ∈ 𝒴• : y_i = 0}` that
/// contains one.
pub fn y_circle<T: Scalar>(game: &PopulationGame<T>) -> Result<YCircle<T>> {
    if game.affine_form().is_none() {
        return Err(Error::NotAffine(game.name().to_string()));
    }
    let en = restricted_nash_enumerate(game)?;
    let n = game.n_actions();
    let mut components = Vec::new();
    let mut nash_points: Vec<Vec<T>> = Vec::new();
    for s in &en.sets {
        if s.nash {
            components.push((ComponentKind::Nash, s.set.clone()));
            nash_points.extend(s.set.points());
        } else if let EquilibriumSet::Continuum { vertices, .. } = &s.set {
            // Part of a continuum may be Nash; keep its Nash vertices.
            for v in vertices.iter().filter(|v| is_nash(game, v)) {
                components.push((ComponentKind::Nash, EquilibriumSet::Point(v.clone())));
                nash_points.push(v.clone());
            }
        }
    }
    for i in 0..n {
        if !nash_points.iter().any(|p| p[i] <= T::zero()) {
            continue;
        }
        for s in &en.sets {
            if s.set.points().iter().all(|p| p[i] <= T::zero()) {
                components.push((ComponentKind::Face(i), s.set.clone()));
            }
        }
    }
    Ok(YCircle { components })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EquilibriumClass {
    Nash,
    RestrictedNash,
    Balanced,
    /// Predicted to be a zero of the field by the equilibrium
    /// characterization alone.
    Theorem1Predicted,
    OracleFound,
}

impl EquilibriumClass {
    pub fn tag(self) -> &'static str {
        match self {
            EquilibriumClass::Nash => "nash",
            EquilibriumClass::RestrictedNash => "restricted_nash",
            EquilibriumClass::Balanced => "balanced",
            EquilibriumClass::Theorem1Predicted => "theorem1_predicted",
            EquilibriumClass::OracleFound => "oracle_found",
        }
    }
}

/// Outcome of checking a state against the equilibrium characterization on
/// connected networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TheoremVerdict {
    NotApplicable(String),
    Consistent,
    Violation(String),
    Inconclusive(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRecord<T> {
    pub x: SystemState<T>,
    pub y: PopulationState<T>,
    pub field_norm: T,
    pub classes: BTreeSet<EquilibriumClass>,
    pub connected: bool,
    pub verdict: TheoremVerdict,
}

impl<T: Scalar> EquilibriumRecord<T> {
    pub fn has(&self, c: EquilibriumClass) -> bool {
        self.classes.contains(&c)
    }
}

/// Support, restricted Nash and Nash membership of `y` at the classification
/// tolerance.
fn membership<T: Scalar>(game: &PopulationGame<T>, y: &[T]) -> (bool, bool) {
    let tol = T::tol(MEMBERSHIP_TOLERANCE);
    let r = game.rewards(y);
    let sup: Vec<usize> = (0..y.len()).filter(|&i| y[i] > tol).collect();
    let lo = sup.iter().map(|&i| r[i]).fold(T::infinity(), T::min);
    let hi = sup.iter().map(|&i| r[i]).fold(T::neg_infinity(), T::max);
    let scale = T::one() + lo.abs().max(hi.abs());
    let restricted = hi - lo <= tol * scale;
    let max_out = (0..y.len())
        .filter(|i| !sup.contains(i))
        .map(|i| r[i])
        .fold(T::neg_infinity(), T::max);
    let nash = restricted && lo >= max_out - T::lit(NASH_SLACK).max(tol * scale);
    (restricted, nash)
}

/// Tags `x` and checks it against the equilibrium characterization: on a
/// connected network, a zero of the field under an Assumption 1 mechanism
/// must be restricted Nash, and balanced as well when rates are positive.
pub fn classify_equilibrium<T: Scalar>(
    x: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    tol: T,
) -> Result<EquilibriumRecord<T>> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("classification tolerance", "must be positive"));
    }
    let field = vector_field(x, game, net, mech)?;
    let field_norm = field.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let y = x.population();
    let (restricted, nash) = membership(game, y.as_slice());
    let balanced = balance_gap(x, net) <= T::tol(MEMBERSHIP_TOLERANCE);
    let mut classes = BTreeSet::new();
    if restricted {
        classes.insert(EquilibriumClass::RestrictedNash);
    }
    if nash {
        classes.insert(EquilibriumClass::Nash);
    }
    if balanced {
        classes.insert(EquilibriumClass::Balanced);
    }
    let predicted = restricted
        && ((balanced && mech.claims_assumption1())
            || (mech.profile() == RateProfile::ZeroAtTies && mech.claims_assumption1()));
    if predicted {
        classes.insert(EquilibriumClass::Theorem1Predicted);
    }
    let connected = net.is_connected();
    let verdict = if !connected {
        TheoremVerdict::NotApplicable("network is not strongly connected".into())
    } else if field_norm > tol {
        TheoremVerdict::NotApplicable("state is not an equilibrium".into())
    } else if !mech.claims_assumption1() {
        TheoremVerdict::NotApplicable("mechanism does not claim Assumption 1".into())
    } else if !restricted {
        TheoremVerdict::Violation("equilibrium is not restricted Nash".into())
    } else {
        match mech.profile() {
            RateProfile::Positive if balanced => TheoremVerdict::Consistent,
            RateProfile::Positive => {
                TheoremVerdict::Violation("positive rates but equilibrium is not balanced".into())
            }
            RateProfile::ZeroAtTies => TheoremVerdict::Consistent,
            RateProfile::Unknown => TheoremVerdict::Inconclusive(
                "rates are neither everywhere positive nor zero at ties".into(),
            ),
        }
    };
    Ok(EquilibriumRecord {
        x: x.clone(),
        y,
        field_norm,
        classes,
        connected,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub density: usize,
    /// Grid local minima with `‖ẋ‖∞` below this are refined.
    pub candidate_threshold: f64,
    pub dedup_radius: f64,
    pub refine_tolerance: f64,
    /// Refined states with `‖ẋ‖∞` above this are discarded.
    pub accept_tolerance: f64,
    pub max_points: u128,
}

impl OracleSettings {
    pub fn new(density: usize) -> Self {
        Self {
            density,
            candidate_threshold: 1e-3,
            dedup_radius: 1e-6,
            refine_tolerance: 1e-10,
            accept_tolerance: 1e-8,
            max_points: 10_000_000,
        }
    }
}

fn binom(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of points of the product simplex grid.
pub fn grid_size(n_actions: usize, n_communities: usize, density: usize) -> u128 {
    let per = binom((density + n_actions - 1) as u128, (n_actions - 1) as u128);
    per.checked_pow(n_communities as u32).unwrap_or(u128::MAX)
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<u16>> {
    fn go(rem: usize, parts: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if parts == 1 {
            cur.push(rem as u16);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=rem).rev() {
            cur.push(v as u16);
            go(rem - v, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Brute-force search for zeros of the field: scans a product simplex grid,
/// refines discrete local minima below the candidate threshold by
/// Levenberg–Marquardt on `‖ẋ‖₂²`, and deduplicates.
pub fn find_equilibria_numeric<T: Scalar>(
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    settings: &OracleSettings,
) -> Result<Vec<EquilibriumRecord<T>>> {
    let n = game.n_actions();
    let m = net.len();
    if settings.density == 0 {
        return Err(Error::invalid("grid density", "must be at least 1"));
    }
    let points = grid_size(n, m, settings.density);
    if points > settings.max_points {
        return Err(Error::GridTooLarge {
            points,
            limit: settings.max_points,
        });
    }
    let comps = compositions(settings.density, n);
    let per = comps.len();
    let index: HashMap<&[u16], usize> = comps.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
    let dens = T::of(settings.density);
    let state_of = |flat: usize| -> Array2<T> {
        let mut x = Array2::zeros((n, m));
        let mut rest = flat;
        for h in 0..m {
            let c = &comps[rest % per];
            rest /= per;
            for i in 0..n {
                x[[i, h]] = T::of(c[i] as usize) / dens * net.eta()[h];
            }
        }
        x
    };
    let norm_at = |x: Array2<T>| -> T {
        let s = SystemState::from_array_unchecked(x);
        vector_field(&s, game, net, mech)
            .map(|f| f.iter().fold(T::zero(), |a, v| a.max(v.abs())))
            .unwrap_or(T::infinity())
    };
    let total = points as usize;
    let values: Vec<T> = (0..total).into_par_iter().map(|p| norm_at(state_of(p))).collect();

    let threshold = T::lit(settings.candidate_threshold);
    let candidates: Vec<usize> = (0..total)
        .into_par_iter()
        .filter(|&p| {
            let v = values[p];
            if !(v <= threshold) {
                return false;
            }
            let mut rest = p;
            let mut stride = 1;
            for _ in 0..m {
                let ci = rest % per;
                rest /= per;
                let c = &comps[ci];
                for a in 0..n {
                    if c[a] == 0 {
                        continue;
                    }
                    for b in 0..n {
                        if a == b {
                            continue;
                        }
                        let mut nb = c.clone();
                        nb[a] -= 1;
                        nb[b] += 1;
                        let q = p - ci * stride + index[nb.as_slice()] * stride;
                        if values[q] < v || (values[q] == v && q < p) {
                            return false;
                        }
                    }
                }
                stride *= per;
            }
            true
        })
        .collect();

    let refined: Vec<Option<Array2<T>>> = candidates
        .par_iter()
        .map(|&p| refine(state_of(p), game, net, mech, settings))
        .collect();

    let radius = T::lit(settings.dedup_radius);
    let mut kept: Vec<Array2<T>> = Vec::new();
    for x in refined.into_iter().flatten() {
        if !kept
            .iter()
            .any(|k| inf_dist(k.as_slice().unwrap(), x.as_slice().unwrap()) <= radius)
        {
            kept.push(x);
        }
    }
    let tol = T::lit(settings.accept_tolerance);
    kept.into_iter()
        .map(|x| {
            let s = SystemState::from_array_unchecked(x);
            let mut rec = classify_equilibrium(&s, game, net, mech, tol)?;
            rec.classes.insert(EquilibriumClass::OracleFound);
            Ok(rec)
        })
        .collect()
}

/// Levenberg–Marquardt on the field over the face of the starting point.
/// Each column keeps its largest entry as the dependent variable; entries
/// that a step would push negative are set to zero and frozen.
fn refine<T: Scalar>(
    x0: Array2<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    settings: &OracleSettings,
) -> Option<Array2<T>> {
    let (n, m) = x0.dim();
    let field = |x: &Array2<T>| -> Vec<T> {
        let s = SystemState::from_array_unchecked(x.clone());
        vector_field(&s, game, net, mech)
            .map(|f| f.iter().copied().collect())
            .unwrap_or_else(|_| vec![T::infinity(); n * m])
    };
    let sq = |v: &[T]| v.iter().map(|a| *a * *a).sum::<T>();
    let inf = |v: &[T]| v.iter().fold(T::zero(), |a, b| a.max(b.abs()));
    let pivots: Vec<usize> = (0..m)
        .map(|h| {
            (0..n)
                .max_by(|&a, &b| x0[[a, h]].partial_cmp(&x0[[b, h]]).unwrap().then(b.cmp(&a)))
                .unwrap()
        })
        .collect();
    let mut free: Vec<(usize, usize)> = (0..m)
        .flat_map(|h| (0..n).map(move |i| (i, h)))
        .filter(|&(i, h)| i != pivots[h] && x0[[i, h]] > T::zero())
        .collect();
    let apply = |x: &Array2<T>, vars: &[(usize, usize)], d: &[T]| -> Array2<T> {
        let mut y = x.clone();
        for (k, &(i, h)) in vars.iter().enumerate() {
            y[[i, h]] += d[k];
            y[[pivots[h], h]] -= d[k];
        }
        y
    };
    let mut x = x0;
    let mut g = field(&x);
    let mut mu = T::lit(1e-3);
    let target = T::lit(settings.refine_tolerance);
    for _ in 0..200 {
        if inf(&g) <= target || free.is_empty() {
            break;
        }
        let nv = free.len();
        let h = T::lit(1e-7);
        let mut jac = Array2::zeros((g.len(), nv));
        for k in 0..nv {
            let mut d = vec![T::zero(); nv];
            d[k] = h;
            let up = field(&apply(&x, &free, &d));
            d[k] = -h;
            let dn = field(&apply(&x, &free, &d));
            for r in 0..g.len() {
                jac[[r, k]] = (up[r] - dn[r]) / (h + h);
            }
        }
        let jt = jac.t();
        let jtj = jt.dot(&jac);
        let jtg = jt.dot(&Array1::from(g.clone()));
        let mut accepted = false;
        for _ in 0..20 {
            let mut lhs = jtj.clone();
            for k in 0..nv {
                lhs[[k, k]] += mu * (T::one() + jtj[[k, k]]);
            }
            let Some(sol) = solve_affine(&lhs, &jtg.mapv(|v| -v), T::zero()) else {
                mu *= T::lit(10.0);
                continue;
            };
            let d: Vec<T> = sol.particular.to_vec();
            let mut cand = apply(&x, &free, &d);
            // Clip the step at the face boundary and freeze clipped entries.
            let mut frozen = Vec::new();
            for (k, &(i, hh)) in free.iter().enumerate() {
                if cand[[i, hh]] < T::zero() {
                    let v = cand[[i, hh]];
                    cand[[pivots[hh], hh]] += v;
                    cand[[i, hh]] = T::zero();
                    frozen.push(k);
                }
            }
            if (0..m).any(|hh| cand[[pivots[hh], hh]] < T::zero()) {
                mu *= T::lit(10.0);
                continue;
            }
            let gc = field(&cand);
            if sq(&gc) < sq(&g) {
                x = cand;
                g = gc;
                mu = (mu / T::lit(3.0)).max(T::lit(1e-12));
                for k in frozen.into_iter().rev() {
                    free.remove(k);
                }
                accepted = true;
                break;
            }
            mu *= T::lit(10.0);
        }
        if !accepted {
            break;
        }
    }
    // Exact column sums.
    for h in 0..m {
        let s: T = x.column(h).sum();
        let eta = net.eta()[h];
        x.column_mut(h).mapv_inplace(|v| v * eta / s);
    }
    let g = field(&x);
    (inf(&g) <= T::lit(settings.accept_tolerance)).then_some(x)
}
