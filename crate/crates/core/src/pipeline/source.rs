use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evaluation::{parse_tum, Trajectory};
use crate::retrieval::TokenSet;
use crate::submap::{
    load_keyframe, load_tokens, DatasetManifest, FrameId, KeyframeFiles, Submap, SubmapId,
    SubmapKind,
};

/// Supplier of frontend output. Regular submaps arrive in order; two-frame
/// loop submaps are produced on request.
pub trait SubmapSource {
    fn num_submaps(&self) -> usize;

    fn submap(&mut self, index: usize) -> Result<Submap>;

    /// The submap `[retrieved, query]`, or `None` if this source cannot produce it.
    fn loop_submap(
        &mut self,
        submap_id: SubmapId,
        retrieved: FrameId,
        query: FrameId,
    ) -> Result<Option<Submap>>;

    fn groundtruth(&self) -> Option<Trajectory> {
        None
    }
}

/// Reads a dataset directory written by the simulator or the token exporter.
#[derive(Debug)]
pub struct DatasetSource {
    dir: PathBuf,
    manifest: DatasetManifest,
    tokens: BTreeMap<FrameId, Arc<TokenSet>>,
}

impl DatasetSource {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        for (i, s) in manifest.submaps.iter().enumerate() {
            if s.frame_ids.len() != s.keyframes.len()
                || s.frame_ids
                    .iter()
                    .zip(&s.keyframes)
                    .any(|(f, k)| *f != k.frame_id)
            {
                return Err(Error::Format {
                    path: dir.into(),
                    msg: format!("submap entry {i}: frame ids do not match keyframe files"),
                });
            }
        }
        Ok(Self {
            dir: dir.into(),
            manifest,
            tokens: BTreeMap::new(),
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn tokens(&mut self, frame: FrameId) -> Result<Option<Arc<TokenSet>>> {
        if let Some(t) = self.tokens.get(&frame) {
            return Ok(Some(t.clone()));
        }
        let Some(entry) = self.manifest.frame(frame) else {
            return Ok(None);
        };
        let (Some(q), Some(k)) = (&entry.qtok, &entry.ktok) else {
            return Ok(None);
        };
        let t = Arc::new(load_tokens(&self.dir.join(q), &self.dir.join(k))?);
        self.tokens.insert(frame, t.clone());
        Ok(Some(t))
    }

    fn load(
        &mut self,
        submap_id: SubmapId,
        kind: SubmapKind,
        files: &[KeyframeFiles],
    ) -> Result<Submap> {
        let mut keyframes = Vec::with_capacity(files.len());
        for f in files {
            let entry = self
                .manifest
                .frame(f.frame_id)
                .cloned()
                .ok_or_else(|| Error::Format {
                    path: self.dir.clone(),
                    msg: format!("unknown frame {}", f.frame_id),
                })?;
            let tokens = self.tokens(f.frame_id)?;
            keyframes.push(load_keyframe(&self.dir, f, &entry, tokens)?);
        }
        let s = Submap {
            submap_id,
            kind,
            keyframes,
        };
        s.validate()?;
        Ok(s)
    }
}

impl SubmapSource for DatasetSource {
    fn num_submaps(&self) -> usize {
        self.manifest.submaps.len()
    }

    fn submap(&mut self, index: usize) -> Result<Submap> {
        let entry = self
            .manifest
            .submaps
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(format!("submap {index} out of range")))?;
        self.load(entry.submap_id, SubmapKind::Regular, &entry.keyframes)
    }

    fn loop_submap(
        &mut self,
        submap_id: SubmapId,
        retrieved: FrameId,
        query: FrameId,
    ) -> Result<Option<Submap>> {
        let entry = self
            .manifest
            .loop_submaps
            .iter()
            .find(|e| e.retrieved_frame == retrieved && e.query_frame == query)
            .cloned();
        match entry {
            Some(e) => Ok(Some(self.load(
                submap_id,
                SubmapKind::LoopClosure,
                &e.keyframes,
            )?)),
            None => Ok(None),
        }
    }

    fn groundtruth(&self) -> Option<Trajectory> {
        let p = self.manifest.groundtruth.as_ref()?;
        parse_tum(&self.dir.join(p)).ok()
    }
}
