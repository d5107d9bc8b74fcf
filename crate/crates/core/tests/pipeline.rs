use std::fs;
use std::path::Path;

use sl4slam::alignment::EdgeKind;
use sl4slam::evaluation::{ate_rmse, parse_tum, AlignMode};
use sl4slam::pipeline::{
    export_ply, export_trajectory, run, world_points, DatasetSource, RunReport, SlamConfig,
    SlamState, SubmapSource,
};
use sl4slam::simulator::{write_dataset, NoiseSpec, Preset, Simulation};
use sl4slam::Error;

fn in_model_sim(preset: Preset, seed: u64) -> Simulation {
    Simulation::preset(preset, NoiseSpec::in_model(), seed).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn disk_and_memory_sources_agree() {
    let mut sim = in_model_sim(Preset::Loop, 3);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&sim, dir.path(), SlamConfig::default().thresholds()).unwrap();
    let mut disk = DatasetSource::open(dir.path()).unwrap();
    assert_eq!(disk.num_submaps(), sim.num_submaps());

    let mem = run(&mut sim, SlamConfig::default(), "loop").unwrap();
    let from_disk = run(&mut disk, SlamConfig::default(), "loop").unwrap();
    let (a, b) = (
        mem.reconstruction.trajectory().unwrap(),
        from_disk.reconstruction.trajectory().unwrap(),
    );
    assert_eq!(a.len(), b.len());
    for (p, q) in a.poses().iter().zip(b.poses()) {
        assert_eq!(p.timestamp, q.timestamp);
        assert!((p.position - q.position).amax() < 1e-9);
    }
    assert_eq!(
        mem.report.loop_closures.accepted,
        from_disk.report.loop_closures.accepted
    );

    let gt = disk.groundtruth().unwrap();
    assert_eq!(gt.len(), sim.groundtruth().len());
}

#[test]
fn same_seed_writes_identical_bytes() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let th = SlamConfig::default().thresholds();
    write_dataset(&in_model_sim(Preset::PlanarWall, 9), d1.path(), th).unwrap();
    write_dataset(&in_model_sim(Preset::PlanarWall, 9), d2.path(), th).unwrap();
    let (f1, f2) = (files(d1.path()), files(d2.path()));
    assert!(!f1.is_empty());
    assert!(f1 == f2, "datasets differ");
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = run(
        &mut in_model_sim(Preset::PlanarWall, 4),
        SlamConfig::default(),
        "p",
    )
    .unwrap();
    let b = run(
        &mut in_model_sim(Preset::PlanarWall, 4),
        SlamConfig::default(),
        "p",
    )
    .unwrap();
    let (ta, tb) = (
        a.reconstruction.trajectory().unwrap(),
        b.reconstruction.trajectory().unwrap(),
    );
    for (p, q) in ta.poses().iter().zip(tb.poses()) {
        assert_eq!(p.position, q.position);
        assert_eq!(p.orientation, q.orientation);
    }
}

#[test]
fn overlap_copies_land_on_the_same_points() {
    // Calibration and scale drift but exact depth and poses.
    let noise = NoiseSpec {
        sigma_rot: 0.0,
        sigma_trans: 0.0,
        depth_noise_frac: 0.0,
        ..NoiseSpec::in_model()
    };
    let mut sim = Simulation::preset(Preset::PlanarWall, noise, 5).unwrap();
    let out = run(&mut sim, SlamConfig::default(), "p").unwrap();
    let state = &out.state;
    let subs = state.submaps();
    for w in subs.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let hp = state.values().get(*prev.vars.last().unwrap()).unwrap();
        let hn = state.values().get(next.vars[0]).unwrap();
        let a = world_points(hp, prev.submap.last(), 0.0);
        let b = world_points(hn, next.submap.first(), 0.0);
        assert_eq!(a.len(), b.len());
        let mut d: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p.position - q.position).norm())
            .collect();
        d.sort_by(f64::total_cmp);
        assert!(
            d[d.len() / 2] < 1e-6,
            "median overlap gap {}",
            d[d.len() / 2]
        );
    }
}

#[test]
fn inter_residuals_stay_within_three_sigma() {
    let mut sim = in_model_sim(Preset::PlanarWall, 6);
    let out = run(&mut sim, SlamConfig::default(), "p").unwrap();
    let res = out.state.edge_residuals(EdgeKind::Inter).unwrap();
    assert_eq!(res.len(), sim.num_submaps() - 1);
    for (_, r) in res {
        assert!(r.amax() <= 3.0, "{}", r.amax());
    }
}

#[test]
fn exports_and_report_round_trip() {
    let mut sim = in_model_sim(Preset::PlanarWall, 1);
    let gt = sim.groundtruth();
    let out = run(&mut sim, SlamConfig::default(), "planar-wall").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let tum = dir.path().join("trajectory.tum");
    let ply = dir.path().join("map.ply");
    export_trajectory(&out.reconstruction, &tum).unwrap();
    export_ply(&out.reconstruction, &ply).unwrap();

    let est = parse_tum(&tum).unwrap();
    assert_eq!(est.len(), gt.len());
    assert!(ate_rmse(&est, &gt, AlignMode::Sim3).unwrap() < 0.05);

    let bytes = fs::read(&ply).unwrap();
    let header = format!("element vertex {}\n", out.reconstruction.points.len());
    assert!(String::from_utf8_lossy(&bytes[..300.min(bytes.len())]).contains(&header));
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .unwrap()
        + 11;
    assert_eq!(bytes.len() - end, 20 * out.reconstruction.points.len());

    let json = serde_json::to_string(&out.report).unwrap();
    let back: RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.report);
    assert_eq!(back.regular_submaps, sim.num_submaps());
    assert_eq!(back.edges.inter, sim.num_submaps() - 1);
}

#[test]
fn out_of_order_submap_is_rejected() {
    let mut sim = in_model_sim(Preset::PlanarWall, 2);
    let mut state = SlamState::new(SlamConfig::default()).unwrap();
    let s0 = sim.submap(0).unwrap();
    let s2 = sim.submap(2).unwrap();
    state.ingest_submap(s0, &mut sim).unwrap();
    assert!(matches!(
        state.ingest_submap(s2, &mut sim),
        Err(Error::OverlapViolation(_))
    ));
}

#[test]
fn too_few_points_falls_back_to_unit_scale() {
    let mut sim = in_model_sim(Preset::PlanarWall, 2);
    let cfg = SlamConfig {
        min_points: 1_000_000,
        ..Default::default()
    };
    let out = run(&mut sim, cfg, "p").unwrap();
    assert_eq!(
        out.report
            .warnings
            .iter()
            .filter(|w| w.contains("s = 1"))
            .count(),
        sim.num_submaps() - 1
    );
    let inter = out.state.edge_residuals(EdgeKind::Inter).unwrap();
    assert!(inter
        .iter()
        .all(|(e, _)| e.sigma[0] == cfg.inter_sigma * cfg.fallback_sigma_factor));
}
