//! Per-team citation graph over mini-papers.
//!
//! Every edge points from a citing paper to an earlier paper, so the graph is
//! acyclic by construction. The graph is a derived view: it is rebuilt from
//! the event log and never persisted on its own.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::ids::PaperId;
use crate::model::{MiniPaper, PaperKind, Score};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("paper {0} is already in the graph")]
    DuplicateNode(PaperId),
    #[error("paper {citing} cites {cited}, which is not an earlier node")]
    DanglingCitation { citing: PaperId, cited: PaperId },
    #[error("unknown paper {0}")]
    UnknownPaper(PaperId),
    #[error("citation graph contains a cycle")]
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeInfo {
    pub seq: u64,
    pub kind: PaperKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CitationGraph {
    nodes: BTreeMap<PaperId, NodeInfo>,
    forward: BTreeMap<PaperId, Vec<PaperId>>,
    reverse: BTreeMap<PaperId, BTreeSet<PaperId>>,
    edges: usize,
}

impl CitationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns a new graph containing `paper`; `self` is left untouched.
    pub fn add_paper(&self, paper: &MiniPaper) -> Result<CitationGraph, GraphError> {
        let mut next = self.clone();
        next.insert(paper)?;
        Ok(next)
    }

    /// In-place variant of [`add_paper`](Self::add_paper). On error the graph is unchanged.
    pub fn insert(&mut self, paper: &MiniPaper) -> Result<(), GraphError> {
        if self.nodes.contains_key(&paper.id) {
            return Err(GraphError::DuplicateNode(paper.id.clone()));
        }
        let mut seen = BTreeSet::new();
        for cited in &paper.citations {
            let earlier = self.nodes.get(cited).is_some_and(|n| n.seq < paper.seq);
            if !earlier || !seen.insert(cited) {
                return Err(GraphError::DanglingCitation {
                    citing: paper.id.clone(),
                    cited: cited.clone(),
                });
            }
        }

        self.nodes.insert(
            paper.id.clone(),
            NodeInfo { seq: paper.seq, kind: paper.kind, score: paper.score },
        );
        for cited in &paper.citations {
            self.reverse.entry(cited.clone()).or_default().insert(paper.id.clone());
        }
        self.edges += paper.citations.len();
        self.forward.insert(paper.id.clone(), paper.citations.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &PaperId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &PaperId) -> Option<&NodeInfo> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&PaperId, &NodeInfo)> {
        self.nodes.iter()
    }

    /// Papers cited by `id`, in the citing paper's declared order.
    pub fn cites(&self, id: &PaperId) -> Result<&[PaperId], GraphError> {
        self.forward
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| GraphError::UnknownPaper(id.clone()))
    }

    /// Papers citing `id`.
    pub fn cited_by(&self, id: &PaperId) -> Result<BTreeSet<PaperId>, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownPaper(id.clone()));
        }
        Ok(self.reverse.get(id).cloned().unwrap_or_default())
    }

    /// Every paper reachable from `id` through citations, excluding `id`.
    pub fn lineage(&self, id: &PaperId) -> Result<BTreeSet<PaperId>, GraphError> {
        let mut stack: Vec<&PaperId> = self.cites(id)?.iter().collect();
        let mut reached = BTreeSet::new();
        while let Some(next) = stack.pop() {
            if reached.insert(next.clone()) {
                stack.extend(self.forward.get(next).into_iter().flatten());
            }
        }
        Ok(reached)
    }

    pub fn citation_edge_count(&self) -> usize {
        self.edges
    }

    /// Papers nobody cites yet.
    pub fn uncited_papers(&self) -> BTreeSet<PaperId> {
        self.nodes
            .keys()
            .filter(|id| self.reverse.get(*id).is_none_or(BTreeSet::is_empty))
            .cloned()
            .collect()
    }

    /// All edges as `(citing, cited)` pairs, citing papers in seq order.
    pub fn edges(&self) -> Vec<(PaperId, PaperId)> {
        let mut citing: Vec<(&PaperId, &NodeInfo)> = self.nodes.iter().collect();
        citing.sort_by_key(|(_, n)| n.seq);
        citing
            .into_iter()
            .flat_map(|(id, _)| {
                self.forward[id].iter().map(move |cited| (id.clone(), cited.clone()))
            })
            .collect()
    }

    /// Kahn's algorithm; every paper appears after all papers it cites.
    pub fn topological_order(&self) -> Result<Vec<PaperId>, GraphError> {
        let mut pending: BTreeMap<&PaperId, usize> =
            self.forward.iter().map(|(id, cited)| (id, cited.len())).collect();
        let mut ready: VecDeque<&PaperId> =
            pending.iter().filter(|(_, n)| **n == 0).map(|(id, _)| *id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_front() {
            order.push(id.clone());
            for citing in self.reverse.get(id).into_iter().flatten() {
                let n = pending.get_mut(citing).expect("reverse index is closed");
                *n -= 1;
                if *n == 0 {
                    ready.push_back(citing);
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(GraphError::Cycle)
        }
    }
}
