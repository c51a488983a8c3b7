//! Acceptance criteria, one line of output per criterion. Built without the
//! libtest harness so the lines always reach stdout.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ratslam::config::RunConfig;
use ratslam::eval::{align, hausdorff, hausdorff_brute, PointSet2};
use ratslam::experience_map::{ExperienceMap, MapEvent, MapPose};
use ratslam::geometry::{wrap_index, OdometryDelta};
use ratslam::ingest::{load_dataset, synchronize};
use ratslam::local_view::ViewEvent;
use ratslam::pipeline::{dead_reckon, run_dataset, Slam};
use ratslam::pose_cells::{
    build_kernel, excite, inhibit, ActivityVolume, Kernel3, KernelKind, PackedPose, PoseCellNetwork,
};
use ratslam::synth_world::{generate, initial_heading, ScenarioSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_volume(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> ActivityVolume {
    let n = dims.iter().product();
    ActivityVolume::from_values(dims, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Direct wrapped triple sum: out[x] = sum_i P[i] * K[x - i].
fn oracle(p: &ActivityVolume, k: &Kernel3) -> Vec<f64> {
    let [nx, ny, nt] = p.dims();
    let [kx, ky, kt] = k.dims();
    let (hx, hy, ht) = ((kx / 2) as isize, (ky / 2) as isize, (kt / 2) as isize);
    let mut out = vec![0.0; p.len()];
    for x in 0..nx {
        for y in 0..ny {
            for t in 0..nt {
                let mut sum = 0.0;
                for a in -hx..=hx {
                    for b in -hy..=hy {
                        for c in -ht..=ht {
                            let src = p.get(
                                wrap_index(x as isize - a, nx),
                                wrap_index(y as isize - b, ny),
                                wrap_index(t as isize - c, nt),
                            );
                            sum += src * k.weight(a, b, c);
                        }
                    }
                }
                out[p.index(x, y, t)] = sum;
            }
        }
    }
    out
}

fn odd_at_most(rng: &mut ChaCha8Rng, max: usize) -> usize {
    let choices: Vec<usize> = (1..=max).filter(|d| d % 2 == 1).collect();
    choices[rng.random_range(0..choices.len())]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let dims = [rng.random_range(1..=7), rng.random_range(1..=7), rng.random_range(1..=7)];
        let p = random_volume(&mut rng, dims);
        let dim = odd_at_most(&mut rng, *dims.iter().min().unwrap());
        let sigma = rng.random_range(0.3..4.0);
        let eps = build_kernel(sigma, dim, KernelKind::Excitatory).unwrap();
        let psi = build_kernel(sigma * 1.5, dim, KernelKind::Inhibitory).unwrap();
        let phi = rng.random_range(0.0..0.01);
        let e = excite(&p, &eps).unwrap();
        let i = inhibit(&p, &psi, phi).unwrap();
        let oe = oracle(&p, &eps);
        let oi = oracle(&p, &psi);
        for k in 0..p.len() {
            worst = worst.max((e.values()[k] - oe[k]).abs());
            worst = worst.max((i.values()[k] - (-oi[k] - phi)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 5.0, format!("max error {worst:.3e}, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let cfg = RunConfig::default();
    let mut net = PoseCellNetwork::new(&cfg).unwrap();
    let dims = net.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_sum, mut worst_min) = (0.0f64, f64::INFINITY);
    for _ in 0..1000 {
        let odom = OdometryDelta::new(rng.random_range(-2.0..2.0), rng.random_range(-PI / 2.0..PI / 2.0));
        let injections: Vec<(PackedPose, f64)> = (0..rng.random_range(0..3))
            .map(|_| {
                let pose = PackedPose::new(
                    rng.random_range(0.0..dims[0] as f64),
                    rng.random_range(0.0..dims[1] as f64),
                    rng.random_range(0.0..dims[2] as f64),
                );
                (pose, rng.random_range(0.0..1.0))
            })
            .collect();
        net.step(odom, &injections).unwrap();
        worst_sum = worst_sum.max((net.volume().sum() - 1.0).abs());
        worst_min = worst_min.min(net.volume().min());
    }
    outcome(
        worst_sum <= 1e-9 && worst_min >= 0.0,
        format!("max |sum - 1| {worst_sum:.3e}, min cell {worst_min:.3e}"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = RunConfig::default();
    let dims = [cfg.pc_dim_xy, cfg.pc_dim_xy, cfg.pc_dim_th];
    let mut fractions = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut p = random_volume(&mut rng, dims);
        let total = p.sum();
        p.values_mut().iter_mut().for_each(|v| *v /= total);
        let mut net = PoseCellNetwork::with_volume(&cfg, p).unwrap();
        let mut collapsed = false;
        for _ in 0..100 {
            if net.step(OdometryDelta::default(), &[]).is_err() {
                collapsed = true;
                break;
            }
        }
        fractions.push(if collapsed { -1.0 } else { net.volume().energy_near_peak(2) });
    }
    let min = fractions.iter().cloned().fold(f64::INFINITY, f64::min);
    let passing = fractions.iter().filter(|&&f| f >= 0.9).count();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    outcome(
        passing == fractions.len(),
        format!("{passing}/20 seeds >= 0.9, min {min:.3}, mean {mean:.3}"),
    )
}

fn random_graph(rng: &mut ChaCha8Rng, consistent: bool) -> (ExperienceMap, usize) {
    let n = rng.random_range(2..=20);
    let truth: Vec<MapPose> = (0..n)
        .map(|_| MapPose::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-PI..PI)))
        .collect();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..rng.random_range(0..n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            pairs.push((a, b));
        }
    }
    let links: Vec<MapPose> = pairs
        .iter()
        .map(|&(a, b)| {
            let mut d = truth[a].relative(&truth[b]);
            if !consistent {
                d = MapPose::new(
                    d.x + rng.random_range(-1.0..1.0),
                    d.y + rng.random_range(-1.0..1.0),
                    d.theta + rng.random_range(-0.2..0.2),
                );
            }
            d
        })
        .collect();
    let with_links: Vec<_> = pairs.iter().zip(&links).map(|(&(a, b), &d)| (a, b, d)).collect();
    // Links take their frames from the true poses; the solver then starts
    // from a perturbed copy.
    let mut map = ExperienceMap::from_graph(&truth, &with_links);
    for (id, p) in truth.iter().enumerate() {
        let moved = MapPose::new(
            p.x + rng.random_range(-2.0..2.0),
            p.y + rng.random_range(-2.0..2.0),
            p.theta + rng.random_range(-0.1..0.1),
        );
        map.set_pose(id, moved);
    }
    (map, n)
}

fn criterion_4() -> Outcome {
    let mut hand = ExperienceMap::from_graph(
        &[MapPose::new(0.0, 0.0, 0.0), MapPose::new(2.0, 0.0, 0.0)],
        &[(0, 1, MapPose::new(1.0, 0.0, 0.0))],
    );
    hand.relax_once(0.5);
    let hand_ok = hand.experiences()[0].pose == MapPose::new(0.5, 0.0, 0.0)
        && hand.experiences()[1].pose == MapPose::new(1.5, 0.0, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut increases = 0;
    let mut worst_increase = 0.0f64;
    for _ in 0..100 {
        let (mut map, _) = random_graph(&mut rng, false);
        let mut last = map.residual();
        for _ in 0..50 {
            map.relax_once(0.5);
            let r = map.residual();
            if r > last * (1.0 + 1e-12) + 1e-15 {
                increases += 1;
                worst_increase = worst_increase.max(r - last);
            }
            last = r;
        }
    }

    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let (mut map, _) = random_graph(&mut rng, true);
        let initial = map.residual();
        for _ in 0..20_000 {
            map.relax_once(0.5);
        }
        if initial > 0.0 {
            worst_ratio = worst_ratio.max(map.residual() / initial);
        }
    }
    outcome(
        hand_ok && increases == 0 && worst_ratio <= 1e-6,
        format!(
            "hand example {}, {increases} residual increases (worst +{worst_increase:.3e}), worst consistent final/initial {worst_ratio:.3e}",
            if hand_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..100 {
        let points = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..=200);
            let scale = rng.random_range(0.01..1000.0);
            PointSet2::new((0..n).map(|_| (rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect())
        };
        let a = points(&mut rng);
        let b = points(&mut rng);
        if hausdorff(&a, &b).unwrap() != hausdorff_brute(&a, &b).unwrap() {
            mismatches += 1;
        }
    }
    let d345 = hausdorff(&PointSet2::new(vec![(0.0, 0.0)]), &PointSet2::new(vec![(3.0, 4.0)])).unwrap();
    let a = PointSet2::new(vec![(1.0, 2.0), (-3.0, 0.5), (7.0, 7.0)]);
    let ident = hausdorff(&a, &a).unwrap();
    outcome(
        mismatches == 0 && d345 == 5.0 && ident == 0.0,
        format!("{mismatches}/100 mismatches, 3-4-5 -> {d345}, identity -> {ident}"),
    )
}

/// Criterion-6 scenario: 120x40 images, so the crop is widened to the frame.
fn scenario() -> (ScenarioSpec, RunConfig) {
    let spec = ScenarioSpec {
        heading_bias: 0.002,
        seed: 7,
        ..ScenarioSpec::square(40.0)
    };
    let mut cfg = RunConfig::default();
    for o in ["image_crop_x_min=0", "image_crop_x_max=120", "image_crop_y_min=0", "image_crop_y_max=40"] {
        cfg.apply_override(o).unwrap();
    }
    cfg.validate().unwrap();
    (spec, cfg)
}

fn aligned_hausdorff(est: &[(f64, f64)], gt: &[(f64, f64)]) -> f64 {
    let t = align(est, gt).unwrap();
    let est = PointSet2::new(est.to_vec()).transformed(&t);
    hausdorff(&est, &PointSet2::new(gt.to_vec())).unwrap()
}

struct EndToEnd {
    slam: Slam,
    secs: f64,
    lap_steps: usize,
    d_est: f64,
    d_dr: f64,
}

fn end_to_end(root: &Path) -> EndToEnd {
    let (spec, cfg) = scenario();
    let data = root.join("dataset");
    generate(&spec, &data).unwrap();
    let start = Instant::now();
    let stream = load_dataset(&data).unwrap();
    let steps = synchronize(&stream);
    let slam = run_dataset(&stream, &steps, &cfg, &root.join("run"), false).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let gt: Vec<(f64, f64)> = steps.iter().map(|s| s.ground_truth.unwrap()).collect();
    let est: Vec<(f64, f64)> = slam.trajectory().iter().map(|t| (t.3.x, t.3.y)).collect();
    let dr: Vec<(f64, f64)> = dead_reckon(&steps, initial_heading(&spec)).iter().map(|p| (p.x, p.y)).collect();
    EndToEnd {
        d_est: aligned_hausdorff(&est, &gt),
        d_dr: aligned_hausdorff(&dr, &gt),
        lap_steps: (spec.lap_length() / spec.speed * spec.rate).round() as usize,
        slam,
        secs,
    }
}

fn criterion_6(e: &EndToEnd) -> Outcome {
    let closures = e.slam.records()[e.lap_steps..]
        .iter()
        .filter(|r| matches!(r.map, MapEvent::LoopClosed { .. }))
        .count();
    outcome(
        closures >= 1 && e.d_est <= 0.5 * e.d_dr && e.secs < 60.0,
        format!(
            "{closures} lap-2 loop closures, aligned d_H {:.3} m vs dead reckoning {:.3} m (ratio {:.3}), {:.1} s",
            e.d_est,
            e.d_dr,
            e.d_est / e.d_dr,
            e.secs
        ),
    )
}

fn criterion_7(e: &EndToEnd) -> Outcome {
    let records = e.slam.records();
    let known = records[e.lap_steps - 1].n_templates;
    let lap2 = &records[e.lap_steps..];
    let tracking = lap2
        .iter()
        .filter(|r| matches!(r.view, ViewEvent::Matched { id, .. } if id < known))
        .count();
    let frac = tracking as f64 / lap2.len() as f64;
    outcome(frac >= 0.6, format!("{tracking}/{} lap-2 steps on lap-1 templates ({:.1}%)", lap2.len(), 100.0 * frac))
}

fn criterion_8() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    end_to_end(a.path());
    end_to_end(b.path());
    let mut differing = Vec::new();
    let mut compared = 0;
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        compared += 1;
        let x = std::fs::read(a.path().join("run").join(name)).unwrap();
        let y = std::fs::read(b.path().join("run").join(name)).unwrap();
        if x != y {
            differing.push(name.to_string_lossy().into_owned());
        }
    }
    outcome(
        differing.is_empty() && compared >= 6,
        format!("{compared} export files compared, {} differ {:?}", differing.len(), differing),
    )
}

fn criterion_9() -> Outcome {
    // Ten nodes on a 20 m circle; every side claims 13 m while the chord is
    // about 6.2 m, so the constraints cannot all hold.
    let n = 10;
    let poses: Vec<MapPose> = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            MapPose::new(10.0 * a.cos() + 0.3 * (i % 3) as f64, 10.0 * a.sin(), a + PI / 2.0)
        })
        .collect();
    let side = MapPose::new(13.0, 0.0, 2.0 * PI / n as f64);
    let links: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, side)).collect();
    let run = |alpha: f64| {
        let mut map = ExperienceMap::from_graph(&poses, &links);
        let initial = map.residual();
        let mut monotone = true;
        let mut last = initial;
        for _ in 0..50 {
            map.relax_once(alpha);
            let r = map.residual();
            monotone &= r <= last * (1.0 + 1e-12);
            last = r;
        }
        (initial, last, monotone)
    };
    let (i5, f5, mono) = run(0.5);
    let (i15, f15, _) = run(1.5);
    outcome(
        f5 < i5 && mono && f15 > i15,
        format!("alpha 0.5: {i5:.3} -> {f5:.3} (monotone {mono}); alpha 1.5: {i15:.3} -> {f15:.3e}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "convolution oracle", criterion_1()));
    results.push((2, "energy conservation", criterion_2()));
    results.push((3, "attractor convergence", criterion_3()));
    results.push((4, "relaxation correctness", criterion_4()));
    results.push((5, "hausdorff correctness", criterion_5()));
    let dir = tempfile::tempdir().unwrap();
    let e2e = end_to_end(dir.path());
    results.push((6, "end-to-end loop closure", criterion_6(&e2e)));
    results.push((7, "template re-recognition", criterion_7(&e2e)));
    results.push((8, "determinism", criterion_8()));
    results.push((9, "alpha instability", criterion_9()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {:4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
