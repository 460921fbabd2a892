//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slip_core::bagsim::{BagState, BagsimParams, LayerPair, Layers, MaterialKind, MaterialPresets};
use slip_core::geom::{convex_hull, elongation, min_area_rect, orient, Point2};
use slip_core::harness::{
    grasp_height_histogram, run_experiment, strategy_comparison, write_outputs, ExperimentConfig,
    ExperimentOutput, StaticIntervals,
};
use slip_core::percept::{OpeningMetrics, PerceptionNoise};
use slip_core::policy::{
    autobag_step, flatten_branch, AutoBagStep, AutoBagThresholds, AutoBagVariant, FlattenStep,
    FlattenThresholds, PolicyConfig, PolicyKind,
};
use slip_core::slip::{
    run_slip, ClassifierModel, H0Rule, SlipContext, SlipParams, SlipResult, Strategy,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// 1. Geometry oracles.

fn brute_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    let mut verts = Vec::new();
    for (i, &p) in pts.iter().enumerate() {
        for (j, &q) in pts.iter().enumerate() {
            if i == j {
                continue;
            }
            let edge = pts.iter().enumerate().all(|(k, &r)| {
                if k == i || k == j {
                    return true;
                }
                let o = orient(p, q, r);
                o > 0.0 || (o == 0.0 && (r - p).dot(q - p) > 0.0 && (r - q).dot(p - q) > 0.0)
            });
            if edge {
                verts.push(p);
                verts.push(q);
            }
        }
    }
    verts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    verts.dedup();
    verts
}

fn sweep_min_area(points: &[Point2]) -> f64 {
    (0..3600)
        .map(|k| {
            let d = Point2::from_angle(0.5 * PI * k as f64 / 3600.0);
            let n = d.perp();
            let (mut u0, mut u1, mut v0, mut v1) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for p in points {
                let (u, v) = (p.dot(d), p.dot(n));
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            (u1 - u0) * (v1 - v0)
        })
        .fold(f64::INFINITY, f64::min)
}

fn geometry_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for set in 0..1000 {
        let n = rng.random_range(3..=12);
        let lattice = set % 2 == 1;
        let pts: Vec<Point2> = (0..n)
            .map(|_| {
                if lattice {
                    Point2::new(rng.random_range(0..6) as f64, rng.random_range(0..6) as f64)
                } else {
                    Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))
                }
            })
            .collect();
        let brute = brute_hull(&pts);
        match convex_hull(&pts) {
            Ok(h) => {
                let mut got = h.vertices().to_vec();
                got.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
                if got != brute {
                    failures.push(format!(
                        "set {set}: hull {} vs brute {}",
                        got.len(),
                        brute.len()
                    ));
                    continue;
                }
            }
            Err(_) => {
                if brute.len() >= 3 {
                    failures.push(format!("set {set}: hull rejected a non-degenerate set"));
                }
                continue;
            }
        }
        let rect = min_area_rect(&pts).expect("non-degenerate hull");
        let sweep = sweep_min_area(&pts);
        if rect.area() > sweep + 1e-6 {
            failures.push(format!("set {set}: rect {} > sweep {sweep}", rect.area()));
        }
        let e = elongation(&pts).unwrap();
        let (angle, scale) = (rng.random_range(-PI..PI), rng.random_range(0.2..5.0));
        let shift = Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let moved: Vec<Point2> = pts
            .iter()
            .map(|&p| p.rotate(angle) * scale + shift)
            .collect();
        let e2 = elongation(&moved).unwrap();
        if (e - e2).abs() > 1e-9 {
            failures.push(format!("set {set}: elongation {e} vs {e2}"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        match failures.first() {
            None => "1000 sets agree".to_string(),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        },
    )
}

// 2 and 3. SLIP on frozen layer heights.

fn static_run(z_bot: f64, z_top: f64, params: SlipParams, seed: u64) -> SlipResult {
    let sim = BagsimParams {
        traj_shift: 0.0,
        traj_rot_deg: 0.0,
        ..BagsimParams::default()
    };
    let mut m = MaterialPresets::default().thin_plastic;
    m.slip_1layer_prob = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = BagState::new_flat(&m, &sim, &mut rng);
    s.forced_layers = Some(LayerPair { z_bot, z_top });
    let raster = sim.workspace.raster();
    let ctx = SlipContext {
        params: &params,
        noise: &PerceptionNoise::zero(),
        sim: &sim,
        raster: &raster,
    };
    run_slip(&s, ctx, &mut ClassifierModel::identity(), &mut rng)
        .expect("rim visible")
        .1
}

fn convergence_theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dh_minus = SlipParams::default().dh_minus;
    let mut failures = Vec::new();
    for i in 0..1000 {
        let z_bot = rng.random_range(0.5..6.0);
        let z_top = z_bot + rng.random_range(dh_minus..5.0);
        let h0 = rng.random_range(z_bot..18.0);
        let params = SlipParams {
            h0_rule: H0Rule::Fixed { h: h0 },
            trial_max: 1,
            iter_max: 100,
            total_iteration_cap: 100,
            ..SlipParams::default()
        };
        let r = static_run(z_bot, z_top, params, i);
        let bound = ((h0 - z_bot) / dh_minus).ceil() as u32 + 1;
        if !r.success || r.iterations_used > bound {
            failures.push(format!(
                "z=({z_bot:.3},{z_top:.3}) h0={h0:.3}: success {} after {} (bound {bound})",
                r.success, r.iterations_used
            ));
        }
    }
    Outcome::new(
        failures.is_empty(),
        match failures.first() {
            None => "1000/1000 within bound".to_string(),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        },
    )
}

fn hand_traces() -> Outcome {
    let fixed = |h| SlipParams {
        h0_rule: H0Rule::Fixed { h },
        ..SlipParams::default()
    };
    let descending = static_run(2.0, 5.0, fixed(10.0), 0);
    let climbing = static_run(2.0, 5.0, fixed(1.0), 0);
    let capped = static_run(
        2.0,
        5.0,
        SlipParams {
            trial_max: 1,
            iter_max: 1,
            ..fixed(12.0)
        },
        0,
    );
    let checks = [
        (
            "10->5",
            descending.success
                && descending.iterations_used == 6
                && descending.heights() == vec![10.0, 9.0, 8.0, 7.0, 6.0, 5.0],
        ),
        (
            "1->4",
            climbing.success
                && climbing.iterations_used == 2
                && climbing.heights() == vec![1.0, 4.0]
                && climbing.height_trace[0].predicted == Layers::Two,
        ),
        (
            "cap",
            !capped.success && capped.iterations_used == 1 && capped.heights() == vec![12.0],
        ),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "3/3 traces exact".to_string()
        } else {
            format!("mismatched: {}", bad.join(", "))
        },
    )
}

// 4. Layer-count distribution over grasp height.

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn height_histogram() -> Outcome {
    let cfg = PolicyConfig::default();
    let mut pass = true;
    let mut notes = Vec::new();
    for m in MaterialKind::BAGS {
        let mid = cfg.materials.get(m).layer_midpoint();
        let heights: Vec<f64> = (0..10).map(|k| mid + k as f64 - 4.5).collect();
        let rows = grasp_height_histogram(m, &heights, 10_000, &cfg, 4);
        let p0: Vec<f64> = rows.iter().map(|r| r.p_zero).collect();
        let p2: Vec<f64> = rows.iter().map(|r| r.p_two).collect();
        let monotone = p0.windows(2).all(|w| w[1] >= w[0]) && p2.windows(2).all(|w| w[1] <= w[0]);
        let (r0, r2) = (spearman(&heights, &p0), spearman(&heights, &p2));
        pass &= monotone && r0 >= 0.95 && r2 <= -0.95;
        notes.push(format!(
            "{} rho0 {r0:.3} rho2 {r2:.3}{}",
            m.name(),
            if monotone { "" } else { " non-monotone" }
        ));
    }
    let grid: Vec<f64> = (2..=28).map(|k| 0.5 * k as f64).collect();
    let per_material: Vec<Vec<f64>> = MaterialKind::BAGS
        .iter()
        .map(|&m| {
            grasp_height_histogram(m, &grid, 10_000, &cfg, 4)
                .iter()
                .map(|r| r.p_one)
                .collect()
        })
        .collect();
    let universal: Vec<f64> = (0..grid.len())
        .filter(|&i| per_material.iter().all(|p| p[i] >= 0.99))
        .map(|i| grid[i])
        .collect();
    pass &= universal.is_empty();
    notes.push(format!(
        "heights with P(One)>=0.99 everywhere: {universal:?}"
    ));
    Outcome::new(pass, notes.join("; "))
}

// 5 and 8. Table trends and the stage-2 ablation.

fn table_trends(out: &ExperimentOutput) -> Outcome {
    let s = &out.summary;
    let cell = |p, m| s.cell(p, m).expect("table1 cell");
    let mut fails = Vec::new();
    for m in MaterialKind::BAGS {
        let sb = cell(PolicyKind::SlipBagging, m);
        let single = sb.single_layer.value();
        if single < 0.80 {
            fails.push(format!("a: SB single {} {single:.3}", m.name()));
        }
        let pd = cell(PolicyKind::PerceivedDepth, m).single_layer.value();
        if pd > 0.40 {
            fails.push(format!("b: PD single {} {pd:.3}", m.name()));
        }
        if matches!(m, MaterialKind::ThinPlastic | MaterialKind::ThickPlastic) {
            let hg = cell(PolicyKind::HandleGrasp, m).mean_inserted_frac;
            if hg != 0.0 {
                fails.push(format!("c: HG inserted {} {hg:.3}", m.name()));
            }
        }
        if matches!(m, MaterialKind::Drawstring | MaterialKind::HandBag) {
            let ab = cell(PolicyKind::AutoBag, m).flatten.value();
            if ab > 0.15 {
                fails.push(format!("d: AB opened {} {ab:.3}", m.name()));
            }
        }
        let full = sb.full_success.value();
        for p in PolicyKind::ALL
            .into_iter()
            .filter(|&p| p != PolicyKind::SlipBagging)
        {
            let other = cell(p, m).full_success.value();
            if full <= other {
                fails.push(format!(
                    "e: {} SB {full:.3} <= {} {other:.3}",
                    m.name(),
                    p.name()
                ));
            }
        }
    }
    let sb_full: Vec<String> = MaterialKind::BAGS
        .iter()
        .map(|&m| {
            format!(
                "{:.2}",
                cell(PolicyKind::SlipBagging, m).full_success.value()
            )
        })
        .collect();
    Outcome::new(
        fails.is_empty(),
        if fails.is_empty() {
            format!("SB full success {}", sb_full.join("/"))
        } else {
            fails.join("; ")
        },
    )
}

fn ablation(out: &ExperimentOutput) -> Outcome {
    let rate = |p| {
        let rows: Vec<_> = out
            .records
            .iter()
            .filter(|r| r.policy == p && r.material == MaterialKind::ThinPlastic)
            .collect();
        let full = rows
            .iter()
            .filter(|r| r.objects_inserted == r.n_objects)
            .count();
        (full as f64 / rows.len() as f64, rows.len())
    };
    let ((ab, n), (abd, _)) = (rate(PolicyKind::AutoBag), rate(PolicyKind::AutoBagD));
    Outcome::new(
        ab > abd,
        format!("full insertion over {n} seeds: AutoBag {ab:.3} vs no stage 2 {abd:.3}"),
    )
}

// 6. Height strategies under classifier error.

fn strategy_robustness() -> Outcome {
    let cfg = PolicyConfig::default();
    let strategies = [
        Strategy::FixedStep,
        Strategy::DecayingStep { gamma: 0.8 },
        Strategy::Bisection,
    ];
    let rows = strategy_comparison(
        &strategies,
        &[0.0, 0.1],
        1000,
        15,
        StaticIntervals::default(),
        &cfg,
        0,
    );
    let rate = |name: &str, e: f64| {
        rows.iter()
            .find(|r| r.strategy == name && r.error == e)
            .map(|r| r.success_rate)
            .unwrap()
    };
    let names: Vec<String> = strategies.iter().map(Strategy::name).collect();
    let (fixed, decay, bisect) = (
        rate(&names[0], 0.1),
        rate(&names[1], 0.1),
        rate(&names[2], 0.1),
    );
    let clean_ok = names.iter().all(|n| rate(n, 0.0) >= 0.99);
    Outcome::new(
        clean_ok && fixed >= bisect && fixed >= decay,
        format!(
            "error 0.1: fixed {fixed:.3} decaying {decay:.3} bisection {bisect:.3}; error 0: all >= 0.99 {clean_ok}"
        ),
    )
}

// 7. Classifier presets.

fn classifier_presets() -> Outcome {
    let recalls = [
        (MaterialKind::ThinPlastic, [0.90, 0.90, 0.90]),
        (MaterialKind::FoldedCloth, [1.00, 1.00, 0.62]),
        (MaterialKind::Dress, [1.00, 0.75, 0.75]),
        (MaterialKind::Hat, [1.00, 0.83, 0.25]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut recall_ok = true;
    for (kind, recall) in recalls {
        let model = ClassifierModel::for_material(kind);
        for (t, truth) in [Layers::Zero, Layers::One, Layers::Two]
            .into_iter()
            .enumerate()
        {
            let mut counts = [0u32; 3];
            for _ in 0..10_000 {
                counts[model.sample(truth, &mut rng).count()] += 1;
            }
            for (count, p) in counts.iter().zip(model.confusion[t]) {
                worst = worst.max((*count as f64 / 10_000.0 - p).abs());
            }
            recall_ok &= (counts[t] as f64 / 10_000.0 - recall[t]).abs() <= 0.02;
        }
    }
    Outcome::new(
        recall_ok && worst <= 0.02,
        format!("recalls match: {recall_ok}; largest deviation from matrix {worst:.4}"),
    )
}

// 9. Determinism.

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::builtin("table1").unwrap();
    cfg.n_trials = 8;
    cfg.base_seed = 11;
    let root = std::env::temp_dir().join(format!("slip-acceptance-{}", std::process::id()));
    let mut bytes = Vec::new();
    for (i, threads) in [1usize, 3, 1].into_iter().enumerate() {
        cfg.threads = threads;
        let dir = root.join(i.to_string());
        write_outputs(&dir, &run_experiment(&cfg).unwrap()).unwrap();
        bytes.push((
            fs::read(dir.join("results.csv")).unwrap(),
            fs::read(dir.join("summary.json")).unwrap(),
        ));
    }
    let _ = fs::remove_dir_all(&root);
    let same = bytes.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        same,
        format!(
            "3 reruns ({} CSV bytes) identical: {same}",
            bytes[0].0.len()
        ),
    )
}

// 10. Threshold gates.

fn gate_grid() -> Outcome {
    let deg = PI / 180.0;
    let th = FlattenThresholds::default();
    let mut bad = Vec::new();
    let mut n = 0;
    for (s, band) in [(0.30, "small"), (0.70, "mid"), (0.90, "large")] {
        for (angle, aligned) in [(5.0 * deg, true), (40.0 * deg, false)] {
            for (kind, plastic) in [
                (MaterialKind::ThinPlastic, true),
                (MaterialKind::HandBag, false),
            ] {
                let want = match (band, aligned, plastic) {
                    ("small", _, _) => FlattenStep::Shake,
                    ("mid", _, true) => FlattenStep::Dilate,
                    ("mid", _, false) => FlattenStep::Fling,
                    (_, true, _) => FlattenStep::Done,
                    (_, false, _) => FlattenStep::Rotate { angle: -angle },
                };
                n += 1;
                let got = flatten_branch(s, Some(angle), kind, &th);
                if got != want {
                    bad.push(format!(
                        "flatten s={s} a={angle:.3} {}: {got:?}",
                        kind.name()
                    ));
                }
            }
        }
    }
    let ab = AutoBagThresholds::default();
    let metrics = |s, a_ch, e_ch| OpeningMetrics {
        s,
        a_ch,
        e_ch,
        opening_angle: Some(0.0),
        rim_offset: 5.0,
    };
    use AutoBagStep::*;
    use AutoBagVariant::*;
    let cases = [
        (0.54, 0.50, 2.00, Full, true, 0.0, Shake),
        (0.55, 0.15, 4.50, Full, true, 0.0, DilateOpening),
        (0.60, 0.14, 3.00, Full, true, 0.0, Compress),
        (0.60, 0.14, 3.00, Full, false, 0.0, Flip),
        (0.60, 0.20, 4.60, Full, true, 0.0, Compress),
        (0.60, 0.45, 2.88, Full, true, 0.0, Insert),
        (0.60, 0.44, 2.00, Full, true, 0.0, DilateOpening),
        (0.60, 0.50, 2.89, Full, true, 0.0, DilateOpening),
        (0.60, 0.50, 3.50, Full, true, 0.5, Rotate { angle: -0.5 }),
        (0.60, 0.50, 2.00, NoStage2, true, 0.0, Insert),
        (0.60, 0.20, 4.00, NoStage2, true, 0.0, Insert),
        (0.60, 0.10, 4.00, NoStage2, true, 0.0, Compress),
    ];
    for (s, a, e, variant, compress_next, offset, want) in cases {
        n += 1;
        let got = autobag_step(
            &metrics(s, a, e),
            variant,
            compress_next,
            Some(offset),
            &ab,
            PI / 12.0,
        );
        if got != want {
            bad.push(format!("autobag S={s} A={a} E={e} {variant:?}: {got:?}"));
        }
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{n}/{n} branches as expected")
        } else {
            bad.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: u32, name: &str, limit_s: Option<f64>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        let dt = t.elapsed();
        if let Some(l) = limit_s {
            if !within(dt, l) {
                o.pass = false;
                o.detail.push_str(&format!("; over the {l} s budget"));
            }
        }
        all &= o.pass;
        println!(
            "{} {id:>2} {name} ({:.2} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            o.detail
        );
    };
    report(1, "geometry oracles", Some(10.0), &mut geometry_oracles);
    report(
        2,
        "convergence on static intervals",
        Some(5.0),
        &mut convergence_theorem,
    );
    report(3, "hand-traced height sequences", None, &mut hand_traces);
    report(
        4,
        "layer distribution over height",
        Some(60.0),
        &mut height_histogram,
    );
    let t = Instant::now();
    let mut table1 = ExperimentConfig::builtin("table1").unwrap();
    table1.n_trials = 500;
    let out = run_experiment(&table1).unwrap();
    let table_time = t.elapsed().as_secs_f64();
    report(5, "table trends", None, &mut || {
        let mut o = table_trends(&out);
        o.detail
            .push_str(&format!("; experiment {table_time:.1} s"));
        if table_time >= 300.0 {
            o.pass = false;
            o.detail.push_str(" over the 300 s budget");
        }
        o
    });
    report(
        6,
        "strategy robustness",
        Some(30.0),
        &mut strategy_robustness,
    );
    report(7, "classifier presets", None, &mut classifier_presets);
    report(8, "stage-2 ablation", None, &mut || ablation(&out));
    report(9, "determinism", None, &mut determinism);
    report(10, "threshold gates", None, &mut gate_grid);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
