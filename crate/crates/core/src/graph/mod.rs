//! Agent-level simulation on an explicit compatibility graph.
//!
//! An edge `i -> j` means agent `j` finds agent `i`'s item compatible. When
//! an agent arrives, both directed coins between it and every waiting agent
//! are drawn once and kept for the rest of the run. Bridges only give, so
//! only the coin `bridge -> new` is drawn for them.

mod engine;
mod search;

pub use engine::{run_graph_replica, run_graph_replicas, GraphConfig, GraphPolicy, GraphSummary};
pub use search::{
    find_bilateral_partner, find_chain_local, find_chain_max, ChainPath, Priority,
    DEFAULT_SEARCH_BUDGET,
};

use std::collections::{BTreeSet, HashSet};

use rand::Rng;

use crate::counts::AgentType;
use crate::error::{Error, Result};
use crate::params::MarketParams;

pub type AgentId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Waiting,
    Bridge,
    Departed,
}

/// Public view of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agent {
    pub id: AgentId,
    pub agent_type: AgentType,
    pub arrival_epoch: u64,
    pub is_bridge: bool,
}

#[derive(Debug, Clone)]
struct Node {
    kind: AgentType,
    arrival: u64,
    status: Status,
    out: BTreeSet<AgentId>,
    inn: BTreeSet<AgentId>,
}

/// Waiting agents, bridges and the persisted edges among present agents.
#[derive(Debug, Clone, Default)]
pub struct CompatibilityGraph {
    nodes: Vec<Node>,
    waiting: BTreeSet<AgentId>,
    waiting_h: usize,
    bridges: BTreeSet<AgentId>,
    coins_drawn: u64,
    ledger: Option<HashSet<(AgentId, AgentId)>>,
}

impl CompatibilityGraph {
    /// Empty market with `bridges` altruistic bridge agents.
    pub fn new(bridges: u32) -> Self {
        let mut g = Self::default();
        for _ in 0..bridges {
            g.insert_agent(AgentType::E, 0, Status::Bridge);
        }
        g
    }

    /// Record every sampled pair and fail on a repeated pair.
    pub fn with_coin_audit(mut self) -> Self {
        self.ledger = Some(HashSet::new());
        self
    }

    /// Add an agent without drawing any coins.
    pub fn insert_agent(&mut self, kind: AgentType, arrival: u64, status: Status) -> AgentId {
        let id = self.nodes.len() as AgentId;
        self.nodes.push(Node {
            kind,
            arrival,
            status,
            out: BTreeSet::new(),
            inn: BTreeSet::new(),
        });
        match status {
            Status::Waiting => {
                self.waiting.insert(id);
                if kind == AgentType::H {
                    self.waiting_h += 1;
                }
            }
            Status::Bridge => {
                self.bridges.insert(id);
            }
            Status::Departed => {}
        }
        id
    }

    /// Add the edge `from -> to`.
    pub fn add_edge(&mut self, from: AgentId, to: AgentId) {
        self.nodes[from as usize].out.insert(to);
        self.nodes[to as usize].inn.insert(from);
    }

    pub fn has_edge(&self, from: AgentId, to: AgentId) -> bool {
        self.nodes[from as usize].out.contains(&to)
    }

    /// Add a waiting agent and draw its coins with every present agent, in
    /// ascending id order: `new -> j` then `j -> new` for waiting `j`,
    /// `j -> new` only for bridges.
    pub fn arrive<R: Rng + ?Sized>(
        &mut self,
        kind: AgentType,
        epoch: u64,
        p: &MarketParams,
        rng: &mut R,
    ) -> Result<AgentId> {
        let id = self.insert_agent(kind, epoch, Status::Waiting);
        let p_new = type_prob(kind, p);
        let present: Vec<AgentId> = self
            .waiting
            .union(&self.bridges)
            .copied()
            .filter(|&j| j != id)
            .collect();
        for j in present {
            if let Some(ledger) = self.ledger.as_mut() {
                if !ledger.insert((j, id)) {
                    return Err(Error::Invariant(format!(
                        "coins for pair ({j}, {id}) drawn twice"
                    )));
                }
            }
            let node_j = &self.nodes[j as usize];
            if node_j.status == Status::Waiting {
                self.coins_drawn += 1;
                if rng.gen::<f64>() < type_prob(node_j.kind, p) {
                    self.add_edge(id, j);
                }
            }
            self.coins_drawn += 1;
            if rng.gen::<f64>() < p_new {
                self.add_edge(j, id);
            }
        }
        Ok(id)
    }

    /// Remove an agent and all its edges.
    pub fn depart(&mut self, id: AgentId) {
        self.detach(id);
        self.set_status(id, Status::Departed);
    }

    /// Turn a waiting agent into a bridge; it keeps its outgoing edges.
    pub fn make_bridge(&mut self, id: AgentId) {
        let inn = std::mem::take(&mut self.nodes[id as usize].inn);
        for i in inn {
            self.nodes[i as usize].out.remove(&id);
        }
        self.set_status(id, Status::Bridge);
    }

    fn detach(&mut self, id: AgentId) {
        let node = &mut self.nodes[id as usize];
        let out = std::mem::take(&mut node.out);
        let inn = std::mem::take(&mut node.inn);
        for j in out {
            self.nodes[j as usize].inn.remove(&id);
        }
        for i in inn {
            self.nodes[i as usize].out.remove(&id);
        }
    }

    fn set_status(&mut self, id: AgentId, status: Status) {
        let node = &mut self.nodes[id as usize];
        match node.status {
            Status::Waiting => {
                self.waiting.remove(&id);
                if node.kind == AgentType::H {
                    self.waiting_h -= 1;
                }
            }
            Status::Bridge => {
                self.bridges.remove(&id);
            }
            Status::Departed => {}
        }
        node.status = status;
        match status {
            Status::Waiting => {
                self.waiting.insert(id);
                if node.kind == AgentType::H {
                    self.waiting_h += 1;
                }
            }
            Status::Bridge => {
                self.bridges.insert(id);
            }
            Status::Departed => {}
        }
    }

    pub fn agent(&self, id: AgentId) -> Agent {
        let n = &self.nodes[id as usize];
        Agent {
            id,
            agent_type: n.kind,
            arrival_epoch: n.arrival,
            is_bridge: n.status == Status::Bridge,
        }
    }

    pub fn status(&self, id: AgentId) -> Status {
        self.nodes[id as usize].status
    }

    pub fn kind(&self, id: AgentId) -> AgentType {
        self.nodes[id as usize].kind
    }

    pub fn arrival_epoch(&self, id: AgentId) -> u64 {
        self.nodes[id as usize].arrival
    }

    pub fn is_waiting(&self, id: AgentId) -> bool {
        self.status(id) == Status::Waiting
    }

    /// Waiting agents in ascending id order.
    pub fn waiting(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.waiting.iter().copied()
    }

    /// Bridge agents in ascending id order.
    pub fn bridges(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.bridges.iter().copied()
    }

    pub fn num_waiting_h(&self) -> usize {
        self.waiting_h
    }

    pub fn num_waiting_e(&self) -> usize {
        self.waiting.len() - self.waiting_h
    }

    /// Agents `j` with an edge `id -> j`, ascending.
    pub fn out_neighbors(&self, id: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.nodes[id as usize].out.iter().copied()
    }

    /// Agents `i` with an edge `i -> id`, ascending.
    pub fn in_neighbors(&self, id: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.nodes[id as usize].inn.iter().copied()
    }

    pub fn coins_drawn(&self) -> u64 {
        self.coins_drawn
    }

    /// No waiting pair forms a 2-cycle.
    pub fn check_no_two_cycles(&self) -> Result<()> {
        for i in self.waiting() {
            for j in self.out_neighbors(i) {
                if self.is_waiting(j) && self.has_edge(j, i) {
                    return Err(Error::Invariant(format!(
                        "2-cycle between waiting agents {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// No bridge has an edge to a waiting agent.
    pub fn check_bridges_idle(&self) -> Result<()> {
        for b in self.bridges() {
            if let Some(j) = self.out_neighbors(b).find(|&j| self.is_waiting(j)) {
                return Err(Error::Invariant(format!(
                    "bridge {b} has an edge to waiting agent {j}"
                )));
            }
        }
        Ok(())
    }
}

fn type_prob(kind: AgentType, p: &MarketParams) -> f64 {
    match kind {
        AgentType::H => p.p_h,
        AgentType::E => p.p_e,
    }
}
