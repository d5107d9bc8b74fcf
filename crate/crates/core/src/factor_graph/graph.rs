use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alignment::{EdgeMeasurement, Sigma, VarId};
use crate::error::{Error, Result};
use crate::geometry::Sl4;

/// Standard deviation used by [`Graph::anchor_first`] on every coordinate.
pub const ANCHOR_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub var: VarId,
    pub value: Sl4,
    pub sigma: Sigma,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Graph {
    variables: BTreeSet<VarId>,
    betweens: Vec<EdgeMeasurement>,
    priors: Vec<Prior>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, var: VarId) -> bool {
        self.variables.insert(var)
    }

    pub fn add_between(&mut self, edge: EdgeMeasurement) -> Result<()> {
        for v in [edge.var_i, edge.var_j] {
            if !self.variables.contains(&v) {
                return Err(Error::InvalidGraph(format!(
                    "edge references undeclared variable {v}"
                )));
            }
        }
        if edge.var_i == edge.var_j {
            return Err(Error::InvalidGraph(format!(
                "self edge on variable {}",
                edge.var_i
            )));
        }
        if edge.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidGraph("edge sigmas must be positive".into()));
        }
        self.betweens.push(edge);
        Ok(())
    }

    pub fn add_prior(&mut self, prior: Prior) -> Result<()> {
        if !self.variables.contains(&prior.var) {
            return Err(Error::InvalidGraph(format!(
                "prior references undeclared variable {}",
                prior.var
            )));
        }
        if prior.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidGraph("prior sigmas must be positive".into()));
        }
        self.priors.push(prior);
        Ok(())
    }

    /// Fixes the gauge with an identity prior on `var`. Returns `false` when
    /// an identical anchor already exists.
    pub fn anchor_first(&mut self, var: VarId) -> Result<bool> {
        let sigma = Sigma::repeat(ANCHOR_SIGMA);
        let duplicate = self
            .priors
            .iter()
            .any(|p| p.var == var && p.value == Sl4::identity() && p.sigma == sigma);
        if duplicate {
            return Ok(false);
        }
        self.add_prior(Prior {
            var,
            value: Sl4::identity(),
            sigma,
        })?;
        Ok(true)
    }

    pub fn variables(&self) -> &BTreeSet<VarId> {
        &self.variables
    }

    pub fn betweens(&self) -> &[EdgeMeasurement] {
        &self.betweens
    }

    pub fn betweens_mut(&mut self) -> &mut [EdgeMeasurement] {
        &mut self.betweens
    }

    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn priors_mut(&mut self) -> &mut [Prior] {
        &mut self.priors
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.variables.iter().next() else {
            return true;
        };
        let mut adj: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
        for e in &self.betweens {
            adj.entry(e.var_i).or_default().push(e.var_j);
            adj.entry(e.var_j).or_default().push(e.var_i);
        }
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &n in adj.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == self.variables.len()
    }

    /// Checks connectivity and the presence of a gauge-fixing prior.
    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::InvalidGraph("graph has no variables".into()));
        }
        if !self.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        if self.priors.is_empty() {
            return Err(Error::GaugeDeficient);
        }
        Ok(())
    }

    /// One line per factor: kind, variable ids, the 16 row-major matrix entries, the 15 sigmas.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt_entries = |out: &mut String, h: &Sl4, sigma: &Sigma| {
            for r in 0..4 {
                for c in 0..4 {
                    let _ = write!(out, " {:.17e}", h.matrix()[(r, c)]);
                }
            }
            for s in sigma.iter() {
                let _ = write!(out, " {s:.17e}");
            }
        };
        for p in &self.priors {
            let _ = write!(out, "prior {}", p.var);
            fmt_entries(&mut out, &p.value, &p.sigma);
            out.push('\n');
        }
        for e in &self.betweens {
            let kind = match e.kind {
                crate::alignment::EdgeKind::Intra => "intra",
                crate::alignment::EdgeKind::Inter => "inter",
                crate::alignment::EdgeKind::Loop => "loop",
            };
            let _ = write!(out, "{kind} {} {}", e.var_i, e.var_j);
            fmt_entries(&mut out, &e.h_meas, &e.sigma);
            out.push('\n');
        }
        out
    }
}

/// Current assignment of every variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Values(BTreeMap<VarId, Sl4>);

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: VarId, value: Sl4) -> Option<Sl4> {
        self.0.insert(var, value)
    }

    pub fn get(&self, var: VarId) -> Option<&Sl4> {
        self.0.get(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &Sl4)> {
        self.0.iter()
    }

    pub fn covers(&self, graph: &Graph) -> Result<()> {
        if self.0.len() != graph.variables().len()
            || !graph.variables().iter().all(|v| self.0.contains_key(v))
        {
            return Err(Error::InvalidGraph(
                "values do not cover exactly the graph variables".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn value(&self, var: VarId) -> &Sl4 {
        &self.0[&var]
    }
}

impl FromIterator<(VarId, Sl4)> for Values {
    fn from_iter<I: IntoIterator<Item = (VarId, Sl4)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
