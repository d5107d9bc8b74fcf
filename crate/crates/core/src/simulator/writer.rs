use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::Simulation;
use crate::error::Result;
use crate::evaluation::write_tum;
use crate::retrieval::DescriptorDb;
use crate::submap::vgsb::Dtype;
use crate::submap::{
    write_grid, write_matrix3, write_matrix4, write_tokens, write_vector_f32, DatasetManifest,
    FrameEntry, FrameId, Keyframe, KeyframeFiles, LoopSubmapEntry, SubmapEntry, SubmapId,
    Thresholds,
};

pub const GROUNDTRUTH_FILE: &str = "groundtruth.tum";

fn write_copy(dir: &Path, submap: SubmapId, kf: &Keyframe) -> Result<KeyframeFiles> {
    let stem = format!("s{submap:03}_f{:05}", kf.frame_id);
    let files = KeyframeFiles {
        frame_id: kf.frame_id,
        depth: format!("depth_{stem}.vgsb"),
        conf: format!("conf_{stem}.vgsb"),
        k: format!("k_{stem}.vgsb"),
        pose: format!("pose_{stem}.vgsb"),
    };
    write_grid(&dir.join(&files.depth), &kf.depth, Dtype::F64)?;
    write_grid(&dir.join(&files.conf), &kf.conf, Dtype::F64)?;
    write_matrix3(&dir.join(&files.k), kf.k.matrix())?;
    write_matrix4(&dir.join(&files.pose), &kf.t_first.to_matrix4())?;
    Ok(files)
}

/// Loop pairs `(retrieved, query)` that descriptor retrieval will propose,
/// found by replaying the database in submap order.
pub fn retrieval_pairs(sim: &Simulation, threshold: f64) -> Result<Vec<(FrameId, FrameId)>> {
    let sc = sim.scenario();
    let mut db = DescriptorDb::new();
    let mut pairs = BTreeSet::new();
    let mut ordered = Vec::new();
    for k in 0..sc.num_submaps() {
        let frames = sc.submap_frames(k);
        for &f in &frames {
            if let Some(m) = db.query_place(sim.descriptor(f), k as SubmapId, threshold) {
                if pairs.insert((m.frame_id, f)) {
                    ordered.push((m.frame_id, f));
                }
            }
        }
        for &f in &frames {
            if !db.contains(f) {
                db.insert(f, k as SubmapId, sim.descriptor(f).clone())?;
            }
        }
    }
    Ok(ordered)
}

/// Writes the dataset directory (manifest, per-copy arrays, per-frame tokens
/// and descriptors, pre-rendered loop submaps, ground truth).
pub fn write_dataset(
    sim: &Simulation,
    out_dir: &Path,
    thresholds: Thresholds,
) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir)?;
    let sc = sim.scenario();
    let mut frames = Vec::with_capacity(sc.frame_count());
    for f in 0..sc.frame_count() as FrameId {
        let entry = FrameEntry {
            frame_id: f,
            timestamp: sc.timestamps[f as usize],
            desc: Some(format!("desc_f{f:05}.vgsb")),
            qtok: Some(format!("qtok_f{f:05}.vgsb")),
            ktok: Some(format!("ktok_f{f:05}.vgsb")),
        };
        write_vector_f32(
            &out_dir.join(entry.desc.as_ref().unwrap()),
            sim.stored_descriptor(f),
        )?;
        let tok = sim.tokens(f);
        write_tokens(&out_dir.join(entry.qtok.as_ref().unwrap()), tok.q())?;
        write_tokens(&out_dir.join(entry.ktok.as_ref().unwrap()), tok.k())?;
        frames.push(entry);
    }
    let mut submaps = Vec::with_capacity(sc.num_submaps());
    for k in 0..sc.num_submaps() {
        let s = sim.regular_submap(k)?.submap;
        let keyframes = s
            .keyframes
            .iter()
            .map(|kf| write_copy(out_dir, s.submap_id, kf))
            .collect::<Result<_>>()?;
        submaps.push(SubmapEntry {
            submap_id: s.submap_id,
            frame_ids: s.frame_ids(),
            keyframes,
        });
    }
    let mut loop_submaps = Vec::new();
    for (i, (retrieved, query)) in retrieval_pairs(sim, thresholds.retrieval)?
        .into_iter()
        .enumerate()
    {
        let id = (sc.num_submaps() + i) as SubmapId;
        let s = sim.loop_submap(id, retrieved, query)?.submap;
        let keyframes = s
            .keyframes
            .iter()
            .map(|kf| write_copy(out_dir, id, kf))
            .collect::<Result<_>>()?;
        loop_submaps.push(LoopSubmapEntry {
            submap_id: id,
            query_frame: query,
            retrieved_frame: retrieved,
            keyframes,
        });
    }
    write_tum(&sim.groundtruth(), &out_dir.join(GROUNDTRUTH_FILE))?;
    let manifest = DatasetManifest {
        name: sc.name.clone(),
        frame_count: sc.frame_count(),
        submap_size: sc.submap_size,
        image_width: sim.config().width,
        image_height: sim.config().height,
        thresholds,
        frames,
        submaps,
        loop_submaps,
        groundtruth: Some(GROUNDTRUTH_FILE.into()),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}
