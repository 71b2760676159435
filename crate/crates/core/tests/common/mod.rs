#![allow(dead_code)]

use std::path::PathBuf;

use dercap_core::feeder::{BusNode, Der, FeederModel, LineSegment, Load, Phase, PhaseMask, TapSettings};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load(name: &str) -> FeederModel {
    FeederModel::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn node(id: usize, phases: &str) -> BusNode {
    BusNode {
        id,
        phases: PhaseMask::parse(phases).unwrap(),
        label: None,
    }
}

pub fn line(from: usize, to: usize, r: Matrix3<f64>, x: Matrix3<f64>) -> LineSegment {
    LineSegment {
        from,
        to,
        r_ohm: r,
        x_ohm: x,
    }
}

/// Single-phase (phase a) impedance matrices.
pub fn phase_a(r: f64, x: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let mut rm = Matrix3::zeros();
    let mut xm = Matrix3::zeros();
    rm[(0, 0)] = r;
    xm[(0, 0)] = x;
    (rm, xm)
}

/// Builds a model on a 1 kV / 1000 kVA base (impedance base 1 ohm).
pub fn model(nodes: Vec<BusNode>, lines: Vec<LineSegment>, loads: Vec<Load>, ders: Vec<Der>) -> FeederModel {
    FeederModel::new("t", 1000.0, 1.0, TapSettings::default(), nodes, lines, loads, ders).unwrap()
}

fn sym(rng: &mut StdRng, diag: (f64, f64), off: f64) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        m[(i, i)] = rng.gen_range(diag.0..diag.1);
        for j in 0..i {
            let v = rng.gen_range(-off..off);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Random radial feeder with up to `max_nodes` nodes, phase masks nested
/// along the tree, random full impedance matrices and loads.
pub fn random_feeder(seed: u64, max_nodes: usize) -> FeederModel {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let masks = ["abc", "ab", "bc", "ac", "a", "b", "c"];
    let mut phases: Vec<PhaseMask> = vec![PhaseMask::parse("abc").unwrap()];
    let mut nodes = vec![node(0, "abc")];
    let mut lines = Vec::new();
    let mut loads = Vec::new();
    for j in 1..n {
        let parent = rng.gen_range(0..j);
        let pm = phases[parent];
        let candidates: Vec<PhaseMask> = masks
            .iter()
            .map(|m| PhaseMask::parse(m).unwrap())
            .filter(|m| m.is_subset_of(&pm))
            .collect();
        let m = candidates[rng.gen_range(0..candidates.len())];
        phases.push(m);
        nodes.push(BusNode {
            id: j,
            phases: m,
            label: None,
        });
        lines.push(line(parent, j, sym(&mut rng, (0.01, 0.2), 0.05), sym(&mut rng, (0.01, 0.2), 0.05)));
        for p in m.phases() {
            loads.push(Load {
                node: j,
                phase: p,
                p_kw: rng.gen_range(-50.0..150.0),
                q_kvar: rng.gen_range(-50.0..80.0),
            });
        }
    }
    model(nodes, lines, loads, vec![])
}

/// Dense block line impedances `(Zp, Zq)` over line-phases, independent of
/// the library's assembly: phase-angle differences taken from
/// `a = exp(-j2π/3)` powers and `Z* ∘ (α αᴴ)`.
pub fn dense_blocks(m: &FeederModel) -> (DMatrix<f64>, DMatrix<f64>) {
    use num_complex::Complex64 as C;
    let a = [C::new(1.0, 0.0), C::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0), C::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)];
    let n = m.index.len();
    let zb = m.z_base_ohm();
    let mut zp = DMatrix::zeros(n, n);
    let mut zq = DMatrix::zeros(n, n);
    for (u, &(j, ph)) in m.index.entries.iter().enumerate() {
        let l = &m.lines[m.graph.line_into[j].unwrap()];
        for (v, &(k, ps)) in m.index.entries.iter().enumerate() {
            if k != j {
                continue;
            }
            let (i, t) = (ph.index(), ps.index());
            let z = C::new(l.r_ohm[(i, t)], l.x_ohm[(i, t)]) / zb;
            let g = a[i] * a[t].conj();
            let w = g * z.conj();
            zp[(u, v)] = 2.0 * w.re;
            zq[(u, v)] = -2.0 * w.im;
        }
    }
    (zp, zq)
}

/// Voltages from the incidence form: `M F = p − L_p`, `M G = q − L_q`,
/// `Mᵀ Y + M0 Y0 = Zp F + Zq G`.
pub fn dense_voltages(m: &FeederModel, p: &[f64], q: &[f64], lp: &[f64], lq: &[f64], v0: f64) -> Vec<f64> {
    let inc = dercap_core::feeder::build_incidence(m);
    let (zp, zq) = dense_blocks(m);
    let n = p.len();
    let lu = inc.m.clone().lu();
    let f = lu.solve(&DVector::from_fn(n, |i, _| p[i] - lp[i])).unwrap();
    let g = lu.solve(&DVector::from_fn(n, |i, _| q[i] - lq[i])).unwrap();
    let y0 = DVector::from_element(3, v0 * v0);
    let rhs = &zp * f + &zq * g - &inc.m0 * y0;
    let y = inc.m.transpose().lu().solve(&rhs).unwrap();
    y.iter().copied().collect()
}

pub fn phase(c: char) -> Phase {
    Phase::parse(&c.to_string()).unwrap()
}
