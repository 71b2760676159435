//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only make the process exit non-zero when
//! `DERCAP_ACCEPTANCE_STRICT` is set, so the remaining test targets of
//! `cargo test --workspace` still run.

mod common;

use std::cell::RefCell;
use std::time::Instant;

use common::{dense_voltages, fixture, load};
use dercap_conic::{check_kkt, solve, SolverOptions, Status};
use dercap_core::capability::*;
use dercap_core::device::{analytic_envelope, envelope_problem, numeric_envelope, proportional_allocation, DerUnit};
use dercap_core::feeder::{estimate_loss_constants, evaluate, solve_voltages, FeederSensitivities, OperatingPoint};
use dercap_core::io::read_profiles;
use dercap_core::tdsim::{cosimulate, CosimOptions, CosimResult, Scenario, TransmissionNetwork};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const HEALTH_TOL: f64 = 1e-7;

/// Solve outcomes gathered from the suites, checked last.
#[derive(Default)]
struct Health {
    /// Optimal cone solves re-checked directly (suite 1).
    kkt: Vec<(String, bool)>,
    reports: Vec<(String, SolveReport)>,
}

impl Health {
    fn add(&mut self, tag: impl Into<String>, r: SolveReport) {
        self.reports.push((tag.into(), r));
    }

    fn add_point(&mut self, tag: &str, p: &CapabilityPoint) {
        for r in p.reports() {
            self.add(format!("{tag} c={}", p.curtailment), r);
        }
    }

    fn add_curve(&mut self, tag: &str, c: &CapabilityCurve) {
        for p in &c.points {
            self.add_point(tag, p);
        }
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn ieee37(load_mult: f64) -> CapabilityContext {
    let m = load("ieee37.json");
    let op = OperatingPoint::scaled(&m, load_mult, 1.0, "peak solar");
    CapabilityContext::new(m, op).unwrap()
}

fn random_units(rng: &mut StdRng) -> Vec<DerUnit> {
    let n = rng.gen_range(2..=20);
    (0..n)
        .map(|_| {
            let p = rng.gen_range(1.0..100.0);
            let s = p * rng.gen_range(1.0..1.5);
            DerUnit::new(s, p, p * rng.gen_range(0.0..=1.0))
        })
        .collect()
}

fn aggregation(h: &mut Health) -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let t = Instant::now();
    let (mut unsaturated, mut worst, mut bad) = (0, 0.0_f64, 0);
    let mut sets = Vec::new();
    for _ in 0..50 {
        let u = random_units(&mut rng);
        let total: f64 = u.iter().map(|x| x.p_avail_kw).sum();
        let p_sub = total * rng.gen_range(0.0..=1.0);
        let alloc = proportional_allocation(&u, p_sub).unwrap();
        let a = analytic_envelope(&u, p_sub).unwrap();
        let (lo, hi) = numeric_envelope(&u, p_sub).unwrap();
        if !alloc.saturated {
            unsaturated += 1;
            let scale = hi.abs().max(1.0);
            worst = worst.max((a.q_max - hi).abs() / scale).max((a.q_min - lo).abs() / scale);
            if !(close(a.q_max, hi, 1e-6) && close(a.q_min, lo, 1e-6)) {
                bad += 1;
            }
        }
        sets.push((u, p_sub));
    }
    let secs = t.elapsed().as_secs_f64();
    // Health of the underlying cone solves, outside the timed section.
    for (k, (u, p_sub)) in sets.iter().enumerate() {
        for sign in [1.0, -1.0] {
            let prob = envelope_problem(u, *p_sub, sign);
            let sol = solve(&prob, &SolverOptions::default()).unwrap();
            let ok = sol.status == Status::Optimal && check_kkt(&prob, &sol).within(HEALTH_TOL);
            h.kkt.push((format!("aggregation set {k} sign {sign}"), ok));
        }
    }
    verdict(
        bad == 0 && unsaturated > 0 && secs < 5.0,
        format!("{unsaturated}/50 unsaturated sets, max rel diff {worst:.1e} (tol 1e-6), {secs:.2}s (limit 5s)"),
    )
}

/// Brute-force search over the dispatch grid; best net var (pu) per
/// direction, `None` when no grid point is feasible.
fn grid_search(ctx: &CapabilityContext, curtailment: f64, v_tm: f64) -> (Option<f64>, Option<f64>) {
    let m = &ctx.model;
    let base = m.phase_base_kva();
    let avail: Vec<f64> = ctx.op.der_avail_kw.iter().map(|a| a / base).collect();
    let s: Vec<f64> = m.ders.iter().map(|d| d.s_kva / base).collect();
    let total = avail[0] + avail[1];
    let q_load: f64 = ctx.op.load_q_kvar.iter().sum::<f64>() / base;
    let (ylo, yhi) = (ctx.limits.v_min.powi(2), ctx.limits.v_max.powi(2));
    let steps = |h: f64| -> Vec<f64> {
        let k = (h / 0.01).floor() as i64;
        (-k..=k).map(|i| i as f64 * 0.01).collect()
    };
    let v0s: Vec<f64> = (0..)
        .map(|i| v_tm * m.taps.r_min() + i as f64 * 0.01)
        .take_while(|v| *v <= v_tm * m.taps.r_max() + 1e-12)
        .collect();
    let (mut best_lo, mut best_hi): (Option<f64>, Option<f64>) = (None, None);
    for k1 in 0..=100 {
        let c1 = if avail[0] > 0.0 { k1 as f64 / 100.0 } else { 0.0 };
        let c2 = if avail[1] > 0.0 { (curtailment * total - c1 * avail[0]) / avail[1] } else { 0.0 };
        if !(-1e-12..=1.0 + 1e-12).contains(&c2) {
            continue;
        }
        let c2 = c2.clamp(0.0, 1.0);
        let p = [avail[0] * (1.0 - c1), avail[1] * (1.0 - c2)];
        let h = [(s[0] * s[0] - p[0] * p[0]).max(0.0).sqrt(), (s[1] * s[1] - p[1] * p[1]).max(0.0).sqrt()];
        let p_kw = [p[0] * base, p[1] * base];
        for q1 in steps(h[0]) {
            for q2 in steps(h[1]) {
                for &v0 in &v0s {
                    let st = evaluate(m, &ctx.sens, &ctx.op, &p_kw, &[q1 * base, q2 * base], v0).unwrap();
                    if st.y.iter().any(|&y| y < ylo || y > yhi) {
                        continue;
                    }
                    let lossy = st.q_net_kvar / base;
                    let lossless = q_load - q1 - q2;
                    best_lo = Some(best_lo.map_or(lossy, |b: f64| b.min(lossy)));
                    best_hi = Some(best_hi.map_or(lossless, |b: f64| b.max(lossless)));
                }
            }
        }
        if avail[0] == 0.0 {
            break;
        }
    }
    (best_lo, best_hi)
}

fn opf_oracle(h: &mut Health) -> Verdict {
    let m = load("four_node.json");
    let base = m.phase_base_kva();
    let mut ctx = CapabilityContext::new(m.clone(), OperatingPoint::nominal(&m)).unwrap();
    ctx.limits = VoltageLimits { v_min: 0.985, v_max: 1.015 };
    let t = Instant::now();
    let (mut gain, mut mismatch) = (0.0_f64, Vec::new());
    let cases = [(0.0, 1.0), (0.4, 1.0), (0.7, 1.0), (0.4, 0.9), (0.2, 1.12)];
    for (c, v_tm) in cases {
        let lo = capacitive_capability(&ctx, c, v_tm).unwrap();
        let hi = inductive_capability(&ctx, c, v_tm).unwrap();
        h.add(format!("oracle min c={c} v_tm={v_tm}"), lo.report);
        h.add(format!("oracle max c={c} v_tm={v_tm}"), hi.report);
        let (g_lo, g_hi) = grid_search(&ctx, c, v_tm);
        match (lo.dispatch.as_ref(), g_lo) {
            (Some(d), Some(g)) => gain = gain.max(d.q_net_kvar / base - g),
            (None, Some(_)) => mismatch.push(format!("min c={c} v_tm={v_tm}")),
            _ => {}
        }
        match (hi.dispatch.as_ref(), g_hi) {
            (Some(d), Some(g)) => gain = gain.max(g - d.q_net_lossless_kvar / base),
            (None, Some(_)) => mismatch.push(format!("max c={c} v_tm={v_tm}")),
            _ => {}
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        gain <= 0.02 && mismatch.is_empty() && secs < 60.0,
        format!(
            "{} min/max cases, largest grid improvement {gain:.4} pu (limit 0.02), solver-infeasible but grid-feasible: {mismatch:?}, {secs:.1}s (limit 60s)",
            cases.len()
        ),
    )
}

fn linear_exactness() -> Verdict {
    let t = Instant::now();
    let mut worst = 0.0_f64;
    let names = ["two_node.json", "four_node.json", "ieee37.json"];
    for name in names {
        let m = load(name);
        let sens = FeederSensitivities::compute(&m);
        let op = OperatingPoint::nominal(&m);
        let (lp, lq) = estimate_loss_constants(&m, &sens, &op);
        let sens = sens.with_loss_constants(lp.clone(), lq.clone());
        let qd: Vec<f64> = m.ders.iter().map(|d| 0.3 * d.s_kva).collect();
        let (p, q) = op.injections_pu(&m, &op.der_avail_kw, &qd);
        let y = solve_voltages(&sens, &p, &q, 0.98);
        let oracle = dense_voltages(&m, &p, &q, &lp, &lq, 0.98);
        let scale = oracle.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        let d = y.iter().zip(&oracle).fold(0.0_f64, |d, (a, b)| d.max((a - b).abs() / scale));
        worst = worst.max(d);
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 1.0,
        format!("{} fixtures, max rel diff {worst:.1e} (tol 1e-12), {secs:.2}s (limit 1s)", names.len()),
    )
}

/// Capability point with each of its four solves timed on its own.
fn timed_point(ctx: &CapabilityContext, c: f64, w: WorstCaseSpec, slowest: &mut f64) -> CapabilityPoint {
    let mut timed = |f: &dyn Fn() -> CapabilitySide| {
        let t = Instant::now();
        let side = f();
        *slowest = slowest.max(t.elapsed().as_secs_f64());
        side
    };
    let lower = timed(&|| capacitive_capability(ctx, c, 1.0).unwrap());
    let upper = timed(&|| inductive_capability(ctx, c, 1.0).unwrap());
    let wl = timed(&|| capacitive_capability(ctx, c, w.v_tm_max).unwrap());
    let wu = timed(&|| inductive_capability(ctx, c, w.v_tm_min).unwrap());
    let interval = match (lower.dispatch.as_ref(), upper.dispatch.as_ref()) {
        (Some(l), Some(u)) => Some(
            capability_interval(
                (l.q_net_kvar, u.q_net_kvar),
                (l.v0, u.v0),
                (wl.q_kvar(), wu.q_kvar()),
                &ctx.model.taps,
                w.v_tm_min,
                w.v_tm_max,
            )
            .unwrap(),
        ),
        _ => None,
    };
    CapabilityPoint {
        curtailment: c,
        lower,
        upper,
        worst: Some(WorstCase {
            lower: wl,
            upper: wu,
            v_tm_min: w.v_tm_min,
            v_tm_max: w.v_tm_max,
        }),
        interval,
    }
}

/// Lowest grid voltage at which the min problem stays feasible, by bisection.
fn min_problem_window_edge(ctx: &CapabilityContext, c: f64, infeasible: f64, feasible: f64) -> f64 {
    let (mut lo, mut hi) = (infeasible, feasible);
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if capacitive_capability(ctx, c, mid).unwrap().feasible() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn table_trends(h: &mut Health) -> Verdict {
    let t = Instant::now();
    let w = WorstCaseSpec { v_tm_min: 0.9, v_tm_max: 1.1 };
    let grid = [0.0, 0.4, 0.6, 0.8];
    let mut slowest = 0.0_f64;
    let mut notes = Vec::new();
    let (mut i_ok, mut ii_ok, mut iii_ok) = (true, true, true);
    let mut iv_ok = false;
    let mut clamped = 0;
    for (lm, name) in [(1.0, "high"), (0.5, "low")] {
        let ctx = ieee37(lm);
        let q_base = ctx.q_base(1.0).unwrap();
        let points: Vec<CapabilityPoint> = grid.iter().map(|&c| timed_point(&ctx, c, w, &mut slowest)).collect();
        for p in &points {
            h.add_point(&format!("table {name}"), p);
        }
        // (i) capacitive range on the coarse grid.
        let a: Vec<f64> = points.iter().map(|p| p.rpfr(q_base).map_or(f64::NAN, |r| r.a.abs())).collect();
        let inc = a.windows(2).all(|x| x[1] > x[0]);
        i_ok &= inc;
        notes.push(format!("{name} |a| {}", fmt_list(&a)));
        // (iii) offered worst-case interval inside the nominal one; raw
        // re-solves that beat nominal are counted, they are clamped.
        for p in &points {
            let (Some(lo), Some(hi), Some(iv)) = (p.q_lower(), p.q_upper(), p.interval.as_ref()) else { continue };
            let wc = p.worst.as_ref().unwrap();
            if let Some(wl) = iv.worst_case.0 {
                iii_ok &= wl >= lo;
            }
            if let Some(wu) = iv.worst_case.1 {
                iii_ok &= wu <= hi;
            }
            clamped += wc.lower.q_kvar().is_some_and(|w| w < lo) as usize + wc.upper.q_kvar().is_some_and(|w| w > hi) as usize;
        }
        // (ii) inductive range on the default grid.
        let curve = curtailment_sweep(&ctx, &default_curtailment_grid(), 1.0, None).unwrap();
        h.add_curve(&format!("table {name} default grid"), &curve);
        let b: Vec<f64> = curve.points.iter().map(|p| p.rpfr(curve.q_base).map_or(f64::NAN, |r| r.b)).collect();
        let peak = b.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map_or(0, |p| p.0);
        let shape = if lm == 1.0 {
            peak > 0 && peak < b.len() - 1 && b[..=peak].windows(2).all(|x| x[1] >= x[0]) && b[peak..].windows(2).all(|x| x[1] <= x[0]) && b[b.len() - 1] < b[peak]
        } else {
            b.windows(2).all(|x| x[1] >= x[0])
        };
        ii_ok &= shape;
        notes.push(format!("{name} b peaks at c={:.2}", curve.points[peak].curtailment));
        // (iv) min problem at the low grid voltage, 80 % curtailment, high load.
        if lm == 1.0 {
            let side = capacitive_capability(&ctx, 0.8, w.v_tm_min).unwrap();
            h.add("table high min c=0.8 v_tm=0.9", side.report);
            iv_ok = !side.feasible();
            let edge = if side.feasible() { min_problem_window_edge(&ctx, 0.8, 0.7, w.v_tm_min) } else { f64::NAN };
            notes.push(format!("min problem at c=0.8 v_tm=0.9 {} (feasible down to {edge:.3})", side.report.status.as_str()));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let timing = slowest < 1.0 && secs < 30.0;
    verdict(
        i_ok && ii_ok && iii_ok && iv_ok && timing,
        format!(
            "(i) {} (ii) {} (iii) {} ({clamped} raw re-solves clamped) (iv) {}; {}; slowest solve {slowest:.2}s (limit 1s), {secs:.1}s (limit 30s)",
            ok(i_ok),
            ok(ii_ok),
            ok(iii_ok),
            ok(iv_ok),
            notes.join("; ")
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn penetration_and_oversize(h: &mut Health) -> Verdict {
    let t = Instant::now();
    let ctx = ieee37(1.0);
    let pen = parameter_sweep(&ctx, SweepKey::Penetration, &strings(&["20", "40", "60", "80", "100"]), 0.0, 1.0).unwrap();
    let ranges: Vec<FlexibilityRange> = pen.iter().filter_map(|r| r.rpfr()).collect();
    let widens = ranges.len() == pen.len() && ranges.windows(2).all(|w| w[1].a < w[0].a && w[1].b > w[0].b);
    let at0 = parameter_sweep(&ctx, SweepKey::Oversize, &strings(&["1.0"]), 0.0, 1.0).unwrap();
    let at40 = parameter_sweep(&ctx, SweepKey::Oversize, &strings(&["1.0"]), 0.4, 1.0).unwrap();
    for r in pen.iter().chain(&at0).chain(&at40) {
        h.add_curve(&format!("sweep {}", r.value), &r.curve);
    }
    let r0 = at0[0].rpfr();
    let r40 = at40[0].rpfr();
    let zero = r0.is_some_and(|r| r.a == 0.0 && r.b == 0.0);
    let open = r40.is_some_and(|r| r.a < 0.0 && r.b > 0.0);
    let secs = t.elapsed().as_secs_f64();
    let widths: Vec<String> = ranges.iter().map(|r| format!("[{:.3}, {:.3}]", r.a, r.b)).collect();
    verdict(
        widens && zero && open && secs < 30.0,
        format!(
            "penetration 20..100% {}; oversize 1.0 c=0 {:?}; oversize 1.0 c=0.4 {:?}; {secs:.1}s (limit 30s)",
            widths.join(" "),
            r0.map(|r| (r.a, r.b)),
            r40.map(|r| (r.a, r.b))
        ),
    )
}

fn placement(h: &mut Health) -> Verdict {
    let t = Instant::now();
    let ctx = ieee37(1.0);
    let rows = parameter_sweep(&ctx, SweepKey::Placement, &strings(&["end", "beginning", "distributed"]), 0.0, 1.0).unwrap();
    for r in &rows {
        h.add_curve(&format!("placement {}", r.value), &r.curve);
    }
    let a: Vec<f64> = rows.iter().map(|r| r.rpfr().map_or(f64::NAN, |x| x.a)).collect();
    let (end, begin, dist) = (a[0], a[1], a[2]);
    let halved = end.abs() <= 0.5 * dist.abs();
    let near = (begin.abs() - dist.abs()).abs() <= 0.1 * dist.abs();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        halved && near && secs < 20.0,
        format!(
            "a end {end:.3}, beginning {begin:.3}, distributed {dist:.3}; |end| <= |dist|/2 {}; beginning within 10% {}; {secs:.1}s (limit 20s)",
            ok(halved),
            ok(near)
        ),
    )
}

fn ieee1547(h: &mut Health) -> Verdict {
    let t = Instant::now();
    let ctx = ieee37(1.0);
    let profile = read_profiles(std::fs::File::open(fixture("profiles.csv")).unwrap(), Some(24)).unwrap();
    let cmp = ieee1547_scenarios(&ctx, &profile, 0.0, 1.0, &[]).unwrap();
    for s in cmp.curtail.iter().chain(&cmp.oversize) {
        h.add_curve(&format!("ieee1547 hour {}", s.hour), &s.curve);
    }
    let headroom = cmp.curtail.iter().chain(&cmp.oversize).all(|s| s.headroom_ok);
    let hours = cmp.curtail.len().min(cmp.oversize.len());
    let noon = |v: &[ScenarioHour]| v.iter().find(|s| s.hour == 12).and_then(|s| s.rpfr);
    let (o, c) = (noon(&cmp.oversize), noon(&cmp.curtail));
    let contains = matches!((o, c), (Some(o), Some(c)) if o.a < c.a && o.b > c.b);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        headroom && hours == 24 && contains && secs < 60.0,
        format!(
            "headroom at all {hours} hours {}; noon oversize {:?} vs curtail {:?}; {secs:.1}s (limit 60s)",
            ok(headroom),
            o.map(|r| (r.a, r.b)),
            c.map(|r| (r.a, r.b))
        ),
    )
}

fn vtm_window(h: &mut Health) -> Verdict {
    let t = Instant::now();
    let ctx = ieee37(1.0);
    let feasible = |v: f64, h: &mut Health| -> bool {
        let p = capability_point(&ctx, 0.0, v, None).unwrap();
        h.add_point(&format!("vtm {v}"), &p);
        p.all_feasible()
    };
    let probes = [(0.85, false), (0.95, true), (1.05, true), (1.25, false)];
    let probed: Vec<bool> = probes.iter().map(|&(v, _)| feasible(v, h)).collect();
    let anchors = probes.iter().zip(&probed).all(|(p, f)| p.1 == *f);
    let bisect = |mut bad: f64, mut good: f64, h: &mut Health| -> f64 {
        while (good - bad).abs() > 0.005 {
            let mid = 0.5 * (bad + good);
            if feasible(mid, h) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        0.5 * (bad + good)
    };
    let lo = bisect(0.85, 0.95, h);
    let hi = bisect(1.25, 1.05, h);
    // The feasible set on a 0.025 grid is one run bracketed by the edges.
    let grid: Vec<f64> = (0..=16).map(|k| 0.85 + 0.025 * k as f64).collect();
    let pattern: Vec<bool> = grid.iter().map(|&v| feasible(v, h)).collect();
    let runs = pattern.windows(2).filter(|w| w[0] != w[1]).count();
    let consistent = grid.iter().zip(&pattern).all(|(&v, &f)| (v - lo).abs() < 0.005 || (v - hi).abs() < 0.005 || f == (v > lo && v < hi));
    let secs = t.elapsed().as_secs_f64();
    verdict(
        anchors && runs == 2 && consistent && secs < 60.0,
        format!(
            "feasibility at 0.85/0.95/1.05/1.25 {probed:?}; window [{lo:.3}, {hi:.3}] to 0.005; monotone {}; {secs:.1}s (limit 60s)",
            ok(runs == 2 && consistent)
        ),
    )
}

const AFFECTED: [usize; 2] = [5, 9];

fn cosim_ordering(h: &mut Health) -> Verdict {
    let net = TransmissionNetwork::from_json(&std::fs::read_to_string(fixture("cosim/ieee9_residual.json")).unwrap()).unwrap();
    let mut slowest = 0.0_f64;
    let results: Vec<CosimResult> = ["a", "b", "c", "d"]
        .iter()
        .map(|c| {
            let sc = Scenario::load(&fixture(&format!("cosim/case_{c}.json"))).unwrap();
            let t = Instant::now();
            let r = cosimulate(&net, &sc, &CosimOptions::default()).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            r
        })
        .collect();
    for r in &results {
        for s in &r.solve_reports {
            h.add(format!("cosim {}", r.name), *s);
        }
    }
    let converged = results.iter().all(|r| r.diverged_steps().is_empty());
    let v: Vec<f64> = results.iter().map(|r| r.min_vm_after(10, &AFFECTED)).collect();
    let order = v[0] < v[1] && v[1] <= v[2].min(v[3]);
    let recovered = v[2] >= 0.95 && v[3] >= 0.95;
    let in_limits = results[2..].iter().all(|r| {
        r.steps
            .iter()
            .filter(|s| s.t >= 10)
            .all(|s| s.boundaries.iter().all(|b| b.feeder_v_min >= 0.95 - 1e-6 && b.feeder_v_max <= 1.05 + 1e-6))
    });
    verdict(
        converged && order && recovered && in_limits && slowest < 120.0,
        format!(
            "min post-support voltage at buses {AFFECTED:?}: a {:.4}, b {:.4}, c {:.4}, d {:.4}; ordering {}; recovery {}; feeders in limits {}; slowest case {slowest:.1}s (limit 120s)",
            v[0],
            v[1],
            v[2],
            v[3],
            ok(order),
            ok(recovered),
            ok(in_limits)
        ),
    )
}

fn solver_health(h: &Health) -> Verdict {
    let bad_kkt: Vec<&String> = h.kkt.iter().filter(|(_, ok)| !ok).map(|(t, _)| t).collect();
    let bad: Vec<String> = h.reports.iter().filter(|(_, r)| !r.healthy(HEALTH_TOL)).map(|(t, r)| format!("{t}: {}", r.status.as_str())).collect();
    let optimal = h.reports.iter().filter(|(_, r)| r.is_optimal()).count() + h.kkt.len();
    let infeasible = h.reports.iter().filter(|(_, r)| r.status == Status::Infeasible || r.status == Status::Unbounded).count();
    let mut shown: Vec<String> = bad_kkt.iter().map(|s| s.to_string()).chain(bad.iter().cloned()).collect();
    let failures = shown.len();
    shown.truncate(5);
    verdict(
        failures == 0,
        format!(
            "{} solves: {optimal} optimal (KKT at {HEALTH_TOL:.0e}), {infeasible} infeasible with certificates; {failures} unhealthy {shown:?}",
            h.reports.len() + h.kkt.len()
        ),
    )
}

fn main() {
    let health = RefCell::new(Health::default());
    let suites: [(&str, Box<dyn Fn() -> Verdict>); 9] = [
        ("aggregation equivalence", Box::new(|| aggregation(&mut health.borrow_mut()))),
        ("brute-force OPF oracle", Box::new(|| opf_oracle(&mut health.borrow_mut()))),
        ("linear model exactness", Box::new(linear_exactness)),
        ("curtailment trends", Box::new(|| table_trends(&mut health.borrow_mut()))),
        ("penetration and oversize trends", Box::new(|| penetration_and_oversize(&mut health.borrow_mut()))),
        ("placement", Box::new(|| placement(&mut health.borrow_mut()))),
        ("IEEE 1547 headroom", Box::new(|| ieee1547(&mut health.borrow_mut()))),
        ("grid voltage window", Box::new(|| vtm_window(&mut health.borrow_mut()))),
        ("cosimulation ordering", Box::new(|| cosim_ordering(&mut health.borrow_mut()))),
    ];
    let mut failed = 0;
    let mut line = |n: usize, name: &str, v: Verdict| {
        if !v.pass {
            failed += 1;
        }
        println!("{} {n} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    for (k, (name, run)) in suites.iter().enumerate() {
        line(k + 1, name, run());
    }
    line(10, "solver health", solver_health(&health.borrow()));
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 && std::env::var_os("DERCAP_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
