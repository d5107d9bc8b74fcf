//! Incremental driver: submaps in, edges and loop closures built, graph
//! optimized, global reconstruction recovered.

mod recover;
mod source;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

pub use recover::{
    export_ply, export_trajectory, recover_frame, recover_reconstruction, world_points, write_ply,
    FramePose, GlobalReconstruction, MapPoint, PlacedSubmap,
};
pub use source::{DatasetSource, SubmapSource};

use crate::alignment::{
    inter_edge, intra_edges, joint_mask, point_alignment_15dof, EdgeKind, EdgeMeasurement,
    IntraTopology, MaskPolicy, Sigma, VarId, DEFAULT_INTER_SIGMA, DEFAULT_INTRA_SIGMA,
    DEFAULT_MIN_POINTS, POINT_ALIGNMENT_RANK_TOL,
};
use crate::error::{Error, Result};
use crate::factor_graph::{optimize_lm, residual, Graph, LmConfig, OptimizerReport, Values};
use crate::geometry::Sl4;
use crate::retrieval::{verify_pair, DescriptorDb, TokenSet, VerifyConfig};
use crate::submap::{FrameId, Keyframe, Submap, SubmapId, SubmapKind, Thresholds};

/// How the two estimates of a shared frame are tied together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterEdgeMode {
    /// Calibration ratio plus median depth scale.
    Full,
    /// Identity measurement: calibration and scale differences are ignored.
    IdentityAffine,
    /// Full homography fitted to the two copies' point clouds.
    PointAlignment15Dof,
}

impl std::str::FromStr for InterEdgeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "identity-affine" => Ok(Self::IdentityAffine),
            "point-alignment" => Ok(Self::PointAlignment15Dof),
            other => Err(Error::InvalidConfig(format!(
                "unknown inter-edge mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlamConfig {
    pub submap_size: usize,
    pub retrieval_threshold: f64,
    pub match_threshold: f64,
    pub conf_percentile: f64,
    pub min_disparity_px: f64,
    pub intra_sigma: f64,
    pub inter_sigma: f64,
    /// Multiplier on the inter sigma when a scale cannot be estimated and 1 is used.
    pub fallback_sigma_factor: f64,
    pub min_points: usize,
    pub optimize_every_submap: bool,
    pub enable_loop_closure: bool,
    pub max_loop_closures_per_submap: usize,
    pub top_fraction: f64,
    pub scale_logits: bool,
    pub inter_mode: InterEdgeMode,
    pub lm: LmConfig,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            submap_size: 16,
            retrieval_threshold: 0.95,
            match_threshold: 0.85,
            conf_percentile: 0.25,
            min_disparity_px: 50.0,
            intra_sigma: DEFAULT_INTRA_SIGMA,
            inter_sigma: DEFAULT_INTER_SIGMA,
            fallback_sigma_factor: 100.0,
            min_points: DEFAULT_MIN_POINTS,
            optimize_every_submap: true,
            enable_loop_closure: true,
            max_loop_closures_per_submap: 1,
            top_fraction: 0.25,
            scale_logits: true,
            inter_mode: InterEdgeMode::Full,
            lm: LmConfig::default(),
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {v}"
                )))
            }
        };
        if self.submap_size < 2 {
            return Err(Error::InvalidConfig(
                "submap_size must be at least 2".into(),
            ));
        }
        unit("retrieval_threshold", self.retrieval_threshold)?;
        unit("conf_percentile", self.conf_percentile)?;
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "top_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.match_threshold >= 0.0) || !(self.min_disparity_px >= 0.0) {
            return Err(Error::InvalidConfig(
                "thresholds must be non-negative".into(),
            ));
        }
        if !(self.intra_sigma > 0.0 && self.inter_sigma > 0.0 && self.fallback_sigma_factor > 0.0) {
            return Err(Error::InvalidConfig("sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            retrieval: self.retrieval_threshold,
            match_score: self.match_threshold,
            conf_percentile: self.conf_percentile,
            min_disparity_px: self.min_disparity_px,
        }
    }

    fn mask_policy(&self) -> MaskPolicy {
        MaskPolicy {
            conf_percentile: self.conf_percentile,
            min_points: self.min_points,
        }
    }

    fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            threshold: self.match_threshold,
            top_fraction: self.top_fraction,
            scale_logits: self.scale_logits,
        }
    }
}

/// True iff the mean pixel displacement reaches `threshold_px`.
pub fn disparity_gate(correspondences: &[([f64; 2], [f64; 2])], threshold_px: f64) -> Result<bool> {
    if correspondences.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    let total: f64 = correspondences
        .iter()
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .sum();
    Ok(total / correspondences.len() as f64 >= threshold_px)
}

/// Indices of frames to keep: the first, then each frame whose correspondences
/// to the last kept frame pass [`disparity_gate`].
pub fn select_keyframes<F>(
    count: usize,
    threshold_px: f64,
    mut correspondences: F,
) -> Result<Vec<usize>>
where
    F: FnMut(usize, usize) -> Vec<([f64; 2], [f64; 2])>,
{
    let mut kept = Vec::new();
    for i in 0..count {
        match kept.last() {
            None => kept.push(i),
            Some(&last) => {
                if disparity_gate(&correspondences(last, i), threshold_px)? {
                    kept.push(i);
                }
            }
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOutcome {
    Accepted,
    Rejected,
    /// Tokens missing for one of the frames.
    Unverifiable,
    /// Verified, but the source could not produce the two-frame submap.
    Unavailable,
    /// Verified, but the per-submap closure budget was already spent.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopCandidate {
    pub submap_id: SubmapId,
    pub query_frame: FrameId,
    pub retrieved_frame: FrameId,
    pub retrieval_similarity: f64,
    pub match_score: Option<f64>,
    pub outcome: CandidateOutcome,
    pub loop_submap_id: Option<SubmapId>,
}

#[derive(Debug, Clone)]
struct FrameRecord {
    var: VarId,
    tokens: Option<Arc<TokenSet>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarInfo {
    pub submap_id: SubmapId,
    pub frame_id: FrameId,
    pub kind: SubmapKind,
}

/// The whole incremental state: graph, current estimate, place database.
#[derive(Debug, Clone)]
pub struct SlamState {
    config: SlamConfig,
    graph: Graph,
    values: Values,
    db: DescriptorDb,
    submaps: Vec<PlacedSubmap>,
    vars: Vec<VarInfo>,
    frames: BTreeMap<FrameId, FrameRecord>,
    candidates: Vec<LoopCandidate>,
    reports: Vec<OptimizerReport>,
    warnings: Vec<String>,
    regular_count: usize,
    optimize_ms: f64,
    dirty: bool,
}

impl SlamState {
    pub fn new(config: SlamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            graph: Graph::new(),
            values: Values::new(),
            db: DescriptorDb::new(),
            submaps: Vec::new(),
            vars: Vec::new(),
            frames: BTreeMap::new(),
            candidates: Vec::new(),
            reports: Vec::new(),
            warnings: Vec::new(),
            regular_count: 0,
            optimize_ms: 0.0,
            dirty: false,
        })
    }

    pub fn config(&self) -> &SlamConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn submaps(&self) -> &[PlacedSubmap] {
        &self.submaps
    }

    pub fn var_info(&self, var: VarId) -> Option<&VarInfo> {
        self.vars.get(var)
    }

    pub fn candidates(&self) -> &[LoopCandidate] {
        &self.candidates
    }

    pub fn accepted_closures(&self) -> impl Iterator<Item = &LoopCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.outcome == CandidateOutcome::Accepted)
    }

    pub fn reports(&self) -> &[OptimizerReport] {
        &self.reports
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Variable holding the earliest regular copy of `frame`.
    pub fn canonical_var(&self, frame: FrameId) -> Option<VarId> {
        self.frames.get(&frame).map(|r| r.var)
    }

    fn new_var(&mut self, submap_id: SubmapId, frame_id: FrameId, kind: SubmapKind) -> VarId {
        let v = self.vars.len();
        self.vars.push(VarInfo {
            submap_id,
            frame_id,
            kind,
        });
        self.graph.add_variable(v);
        v
    }

    fn sigma(&self, s: f64) -> Sigma {
        Sigma::repeat(s)
    }

    /// Edge between two copies of one image, per the configured mode.
    fn overlap_edge(
        &mut self,
        prev: &Keyframe,
        new: &Keyframe,
        vi: VarId,
        vj: VarId,
        kind: EdgeKind,
    ) -> Result<EdgeMeasurement> {
        let sigma = self.sigma(self.config.inter_sigma);
        let mut edge = match self.config.inter_mode {
            InterEdgeMode::Full => {
                match inter_edge(prev, new, vi, vj, &self.config.mask_policy(), sigma) {
                    Ok(e) => e,
                    Err(Error::InsufficientPoints { found, required }) => {
                        let msg = format!(
                        "frame {}: {found} of {required} points for scale, using s = 1 with inflated sigma",
                        prev.frame_id
                    );
                        warn!("{msg}");
                        self.warnings.push(msg);
                        let a = prev.k.inverse() * new.k.matrix();
                        EdgeMeasurement {
                            var_i: vi,
                            var_j: vj,
                            h_meas: Sl4::from_affine_scale(&a, 1.0)?,
                            kind: EdgeKind::Inter,
                            sigma: sigma * self.config.fallback_sigma_factor,
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            InterEdgeMode::IdentityAffine => EdgeMeasurement {
                var_i: vi,
                var_j: vj,
                h_meas: Sl4::identity(),
                kind: EdgeKind::Inter,
                sigma,
            },
            InterEdgeMode::PointAlignment15Dof => {
                let mask = joint_mask(prev, new, &self.config.mask_policy())?;
                let (xp, xn) = (prev.points(), new.points());
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for ((p, n), m) in xp.iter().zip(xn.iter()).zip(mask.iter()) {
                    if *m && p.norm() > 0.0 && n.norm() > 0.0 {
                        a.push(*p);
                        b.push(*n);
                    }
                }
                let h = point_alignment_15dof(&a, &b, POINT_ALIGNMENT_RANK_TOL)?;
                EdgeMeasurement {
                    var_i: vi,
                    var_j: vj,
                    h_meas: h,
                    kind: EdgeKind::Inter,
                    sigma,
                }
            }
        };
        edge.kind = kind;
        Ok(edge)
    }

    /// Adds one regular submap; loop submaps are requested from `source`.
    pub fn ingest_submap(&mut self, s: Submap, source: &mut dyn SubmapSource) -> Result<()> {
        s.validate()?;
        if s.kind != SubmapKind::Regular {
            return Err(Error::OverlapViolation(format!(
                "submap {} is not a regular submap",
                s.submap_id
            )));
        }
        if s.keyframes.len() != self.config.submap_size {
            let msg = format!(
                "submap {} has {} keyframes, configured size {}",
                s.submap_id,
                s.keyframes.len(),
                self.config.submap_size
            );
            warn!("{msg}");
            self.warnings.push(msg);
        }
        let prev = self
            .submaps
            .iter()
            .rev()
            .find(|p| p.submap.kind == SubmapKind::Regular)
            .cloned();
        if let Some(p) = &prev {
            if p.submap.last().frame_id != s.first().frame_id {
                return Err(Error::OverlapViolation(format!(
                    "submap {} starts with frame {}, previous submap ends with {}",
                    s.submap_id,
                    s.first().frame_id,
                    p.submap.last().frame_id
                )));
            }
        }
        let vars: Vec<VarId> = s
            .keyframes
            .iter()
            .map(|kf| self.new_var(s.submap_id, kf.frame_id, SubmapKind::Regular))
            .collect();

        match &prev {
            None => {
                self.graph.anchor_first(vars[0])?;
                self.values.insert(vars[0], Sl4::identity());
            }
            Some(p) => {
                let vp = *p.vars.last().expect("non-empty");
                let e =
                    self.overlap_edge(p.submap.last(), s.first(), vp, vars[0], EdgeKind::Inter)?;
                let init = *self.values.get(vp).expect("initialized") * e.h_meas;
                self.values.insert(vars[0], init);
                self.graph.add_between(e)?;
            }
        }
        for e in intra_edges(
            &s,
            &vars,
            IntraTopology::Chain,
            self.sigma(self.config.intra_sigma),
        ) {
            let init = *self.values.get(e.var_i).expect("propagated in order") * e.h_meas;
            self.values.insert(e.var_j, init);
            self.graph.add_between(e)?;
        }
        for (kf, &v) in s.keyframes.iter().zip(&vars) {
            self.frames.entry(kf.frame_id).or_insert(FrameRecord {
                var: v,
                tokens: kf.tokens.clone(),
            });
        }
        let placed = PlacedSubmap { submap: s, vars };
        self.submaps.push(placed.clone());
        self.regular_count += 1;

        let mut closed = 0;
        if self.config.enable_loop_closure {
            closed = self.close_loops(&placed, source)?;
        }
        for kf in &placed.submap.keyframes {
            if let Some(d) = &kf.descriptor {
                if !self.db.contains(kf.frame_id) {
                    self.db
                        .insert(kf.frame_id, placed.submap.submap_id, d.clone())?;
                }
            }
        }
        self.dirty = true;
        if self.config.optimize_every_submap || closed > 0 {
            self.optimize()?;
        }
        Ok(())
    }

    fn close_loops(
        &mut self,
        placed: &PlacedSubmap,
        source: &mut dyn SubmapSource,
    ) -> Result<usize> {
        let sid = placed.submap.submap_id;
        let mut hits = Vec::new();
        for (idx, kf) in placed.submap.keyframes.iter().enumerate() {
            if let Some(d) = &kf.descriptor {
                if let Some(m) = self.db.query_place(d, sid, self.config.retrieval_threshold) {
                    // The overlap frame is shared with the previous submap, which may
                    // already have closed this exact pair.
                    let closed = self
                        .accepted_closures()
                        .any(|c| c.query_frame == kf.frame_id && c.retrieved_frame == m.frame_id);
                    if !closed {
                        hits.push((idx, m));
                    }
                }
            }
        }
        // Best similarity first; ties keep keyframe order.
        hits.sort_by(|a, b| b.1.similarity.total_cmp(&a.1.similarity));
        let mut accepted = 0;
        for (idx, m) in hits {
            let kf = &placed.submap.keyframes[idx];
            let mut cand = LoopCandidate {
                submap_id: sid,
                query_frame: kf.frame_id,
                retrieved_frame: m.frame_id,
                retrieval_similarity: m.similarity,
                match_score: None,
                outcome: CandidateOutcome::Unverifiable,
                loop_submap_id: None,
            };
            let retrieved = self.frames.get(&m.frame_id).cloned();
            let (Some(q), Some(r)) = (
                kf.tokens.as_ref(),
                retrieved.as_ref().and_then(|r| r.tokens.as_ref()),
            ) else {
                self.candidates.push(cand);
                continue;
            };
            let ver = verify_pair(q, r, &self.config.verify_config())?;
            cand.match_score = Some(ver.score);
            debug!(
                "submap {sid}: frame {} -> {} sim {:.4} alpha {:.4}",
                kf.frame_id, m.frame_id, m.similarity, ver.score
            );
            if !ver.accepted {
                cand.outcome = CandidateOutcome::Rejected;
            } else if accepted >= self.config.max_loop_closures_per_submap {
                cand.outcome = CandidateOutcome::Skipped;
            } else {
                let loop_id =
                    (source.num_submaps() + self.submaps.len() - self.regular_count) as SubmapId;
                match source.loop_submap(loop_id, m.frame_id, kf.frame_id)? {
                    None => cand.outcome = CandidateOutcome::Unavailable,
                    Some(ls) => {
                        self.add_loop_submap(
                            ls,
                            retrieved.expect("checked").var,
                            placed.vars[idx],
                        )?;
                        cand.outcome = CandidateOutcome::Accepted;
                        cand.loop_submap_id = Some(loop_id);
                        accepted += 1;
                        info!(
                            "submap {sid}: loop closure frame {} -> {} (alpha {:.3})",
                            kf.frame_id, m.frame_id, ver.score
                        );
                    }
                }
            }
            self.candidates.push(cand);
        }
        Ok(accepted)
    }

    fn add_loop_submap(
        &mut self,
        ls: Submap,
        var_retrieved: VarId,
        var_query: VarId,
    ) -> Result<()> {
        ls.validate()?;
        let (fr, fq) = (
            self.vars[var_retrieved].frame_id,
            self.vars[var_query].frame_id,
        );
        if ls.kind != SubmapKind::LoopClosure || ls.frame_ids() != [fr, fq] {
            return Err(Error::OverlapViolation(format!(
                "loop submap {} must hold frames [{fr}, {fq}], found {:?}",
                ls.submap_id,
                ls.frame_ids()
            )));
        }
        let vars: Vec<VarId> = ls
            .keyframes
            .iter()
            .map(|kf| self.new_var(ls.submap_id, kf.frame_id, SubmapKind::LoopClosure))
            .collect();
        let orig_r = self.keyframe_of(var_retrieved).clone();
        let orig_q = self.keyframe_of(var_query).clone();
        let e_r = self.overlap_edge(
            &orig_r,
            &ls.keyframes[0],
            var_retrieved,
            vars[0],
            EdgeKind::Loop,
        )?;
        let e_q = self.overlap_edge(
            &orig_q,
            &ls.keyframes[1],
            var_query,
            vars[1],
            EdgeKind::Loop,
        )?;
        let init = *self.values.get(var_retrieved).expect("initialized") * e_r.h_meas;
        self.values.insert(vars[0], init);
        let intra = intra_edges(
            &ls,
            &vars,
            IntraTopology::Chain,
            self.sigma(self.config.intra_sigma),
        );
        for e in &intra {
            let init = *self.values.get(e.var_i).expect("initialized") * e.h_meas;
            self.values.insert(e.var_j, init);
        }
        for e in intra.into_iter().chain([e_r, e_q]) {
            self.graph.add_between(e)?;
        }
        self.submaps.push(PlacedSubmap { submap: ls, vars });
        Ok(())
    }

    fn keyframe_of(&self, var: VarId) -> &Keyframe {
        self.submaps
            .iter()
            .find_map(|p| {
                p.vars
                    .iter()
                    .position(|&v| v == var)
                    .map(|i| &p.submap.keyframes[i])
            })
            .expect("every variable belongs to a submap")
    }

    /// Runs Levenberg-Marquardt on the whole graph from the current estimate.
    pub fn optimize(&mut self) -> Result<OptimizerReport> {
        let start = Instant::now();
        let (values, report) = optimize_lm(&self.graph, &self.values, &self.config.lm)?;
        self.optimize_ms += start.elapsed().as_secs_f64() * 1e3;
        if !report.converged {
            let msg = format!(
                "optimizer did not converge after {} iterations",
                report.iterations
            );
            warn!("{msg}");
            self.warnings.push(msg);
        }
        debug!(
            "optimized {} variables: cost {:.3e} -> {:.3e}",
            self.values.len(),
            report.initial_cost,
            report.final_cost
        );
        self.values = values;
        self.reports.push(report.clone());
        self.dirty = false;
        Ok(report)
    }

    pub fn reconstruction(&self) -> Result<GlobalReconstruction> {
        recover_reconstruction(&self.values, &self.submaps, self.config.conf_percentile)
    }

    /// Whitened residual of every edge of the given kind at the current estimate.
    pub fn edge_residuals(&self, kind: EdgeKind) -> Result<Vec<(EdgeMeasurement, Sigma)>> {
        self.graph
            .betweens()
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| {
                let r = residual(
                    e,
                    self.values.get(e.var_i).expect("covered"),
                    self.values.get(e.var_j).expect("covered"),
                )?;
                Ok((e.clone(), r))
            })
            .collect()
    }

    pub fn report(&self, dataset: &str, total_ms: f64) -> RunReport {
        let count = |k: EdgeKind| self.graph.betweens().iter().filter(|e| e.kind == k).count();
        let outcome =
            |o: CandidateOutcome| self.candidates.iter().filter(|c| c.outcome == o).count();
        RunReport {
            dataset: dataset.to_string(),
            regular_submaps: self.regular_count,
            loop_submaps: self.submaps.len() - self.regular_count,
            variables: self.vars.len(),
            edges: EdgeCounts {
                intra: count(EdgeKind::Intra),
                inter: count(EdgeKind::Inter),
                r#loop: count(EdgeKind::Loop),
            },
            loop_closures: LoopSummary {
                retrieval_hits: self.candidates.len(),
                accepted: outcome(CandidateOutcome::Accepted),
                rejected: outcome(CandidateOutcome::Rejected),
                unverifiable: outcome(CandidateOutcome::Unverifiable),
                unavailable: outcome(CandidateOutcome::Unavailable),
                skipped: outcome(CandidateOutcome::Skipped),
                candidates: self.candidates.clone(),
            },
            optimizer_runs: self.reports.len(),
            final_optimizer: self.reports.last().cloned(),
            timings_ms: Timings {
                total: total_ms,
                optimize: self.optimize_ms,
            },
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub intra: usize,
    pub inter: usize,
    pub r#loop: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub retrieval_hits: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unverifiable: usize,
    pub unavailable: usize,
    pub skipped: usize,
    pub candidates: Vec<LoopCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub optimize: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub regular_submaps: usize,
    pub loop_submaps: usize,
    pub variables: usize,
    pub edges: EdgeCounts,
    pub loop_closures: LoopSummary,
    pub optimizer_runs: usize,
    pub final_optimizer: Option<OptimizerReport>,
    pub timings_ms: Timings,
    pub warnings: Vec<String>,
}

/// Result of a full run over a source.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SlamState,
    pub reconstruction: GlobalReconstruction,
    pub report: RunReport,
}

/// Ingests every submap of `source`, then recovers the reconstruction.
pub fn run(source: &mut dyn SubmapSource, config: SlamConfig, dataset: &str) -> Result<RunOutput> {
    let start = Instant::now();
    let mut state = SlamState::new(config)?;
    for i in 0..source.num_submaps() {
        let s = source.submap(i)?;
        state.ingest_submap(s, source)?;
    }
    if state.dirty {
        state.optimize()?;
    }
    let reconstruction = state.reconstruction()?;
    let report = state.report(dataset, start.elapsed().as_secs_f64() * 1e3);
    Ok(RunOutput {
        state,
        reconstruction,
        report,
    })
}
