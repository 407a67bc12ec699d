//! Partner and chain-segment searches. Searches never mutate the graph.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng;

use super::{AgentId, CompatibilityGraph};
use crate::counts::AgentType;
use crate::error::{Error, Result};

/// Default cap on node expansions of one Max-Chains search.
pub const DEFAULT_SEARCH_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    HFirst,
    EFirst,
}

/// A segment: a bridge followed by the agents that receive, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPath {
    pub agents: Vec<AgentId>,
    /// H agents among the receivers.
    pub h_count: usize,
    /// E agents among the receivers.
    pub e_count: usize,
}

impl ChainPath {
    pub fn bridge(&self) -> AgentId {
        self.agents[0]
    }

    /// Number of receiving agents, including the arrival.
    pub fn len(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(h_count, len)`, the Max-Chains objective.
    pub fn score(&self) -> (usize, usize) {
        (self.h_count, self.len())
    }
}

fn pick<R: Rng + ?Sized>(items: &[AgentId], rng: &mut R) -> AgentId {
    items[rng.gen_range(0..items.len())]
}

/// Waiting agent forming a 2-cycle with `new`, uniform within the preferred type.
pub fn find_bilateral_partner<R: Rng + ?Sized>(
    g: &CompatibilityGraph,
    new: AgentId,
    priority: Priority,
    rng: &mut R,
) -> Option<AgentId> {
    let (mut hs, mut es) = (Vec::new(), Vec::new());
    for j in g.out_neighbors(new) {
        if j != new && g.is_waiting(j) && g.has_edge(j, new) {
            match g.kind(j) {
                AgentType::H => hs.push(j),
                AgentType::E => es.push(j),
            }
        }
    }
    let order = match priority {
        Priority::HFirst => [hs, es],
        Priority::EFirst => [es, hs],
    };
    order
        .into_iter()
        .find(|c| !c.is_empty())
        .map(|c| pick(&c, rng))
}

fn bridges_to(g: &CompatibilityGraph, new: AgentId) -> Vec<AgentId> {
    g.bridges().filter(|&b| g.has_edge(b, new)).collect()
}

/// Greedy segment: a uniform bridge with an edge to `new`, then repeatedly a
/// uniform waiting H out-neighbour, else a uniform waiting E out-neighbour.
pub fn find_chain_local<R: Rng + ?Sized>(
    g: &CompatibilityGraph,
    new: AgentId,
    rng: &mut R,
) -> Option<ChainPath> {
    let bridges = bridges_to(g, new);
    if bridges.is_empty() {
        return None;
    }
    let bridge = pick(&bridges, rng);
    let mut path = vec![bridge, new];
    let mut used: HashSet<AgentId> = HashSet::from([new]);
    let (mut h_count, mut e_count) = (0, 0);
    match g.kind(new) {
        AgentType::H => h_count += 1,
        AgentType::E => e_count += 1,
    }
    let mut cur = new;
    loop {
        let (mut hs, mut es) = (Vec::new(), Vec::new());
        for j in g.out_neighbors(cur) {
            if g.is_waiting(j) && !used.contains(&j) {
                match g.kind(j) {
                    AgentType::H => hs.push(j),
                    AgentType::E => es.push(j),
                }
            }
        }
        let next = if !hs.is_empty() {
            h_count += 1;
            pick(&hs, rng)
        } else if !es.is_empty() {
            e_count += 1;
            pick(&es, rng)
        } else {
            break;
        };
        used.insert(next);
        path.push(next);
        cur = next;
    }
    Some(ChainPath {
        agents: path,
        h_count,
        e_count,
    })
}

/// Reachable part of the graph with local indices in increasing id order.
struct Local {
    ids: Vec<AgentId>,
    is_h: Vec<bool>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
}

impl Local {
    fn build(g: &CompatibilityGraph, new: AgentId) -> Self {
        let mut seen: BTreeSet<AgentId> = BTreeSet::from([new]);
        let mut stack = vec![new];
        while let Some(x) = stack.pop() {
            for j in g.out_neighbors(x) {
                if g.is_waiting(j) && seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        let ids: Vec<AgentId> = seen.into_iter().collect();
        let index: HashMap<AgentId, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i as u32))
            .collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut inn = vec![Vec::new(); ids.len()];
        for (i, &id) in ids.iter().enumerate() {
            for j in g.out_neighbors(id) {
                if let Some(&k) = index.get(&j) {
                    if k as usize != i && j != new {
                        out[i].push(k);
                        inn[k as usize].push(i as u32);
                    }
                }
            }
        }
        let is_h = ids.iter().map(|&id| g.kind(id) == AgentType::H).collect();
        Self {
            ids,
            is_h,
            out,
            inn,
        }
    }
}

/// Fixed-width bit set over local indices.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn get(&self, i: u32) -> bool {
        self.0[i as usize / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: u32) {
        self.0[i as usize / 64] |= 1 << (i % 64);
    }

    fn clear(&mut self, i: u32) {
        self.0[i as usize / 64] &= !(1 << (i % 64));
    }
}

struct MaxSearch<'a> {
    local: &'a Local,
    budget: u64,
    expansions: u64,
    path: Vec<u32>,
    on_path: Bits,
    /// `(end, visited set)` states already searched.
    done: HashSet<(u32, Bits)>,
    best: (usize, usize),
    best_path: Vec<u32>,
    // Scratch buffers for bounds.
    in_reach: Vec<bool>,
    reach: Vec<u32>,
    matched_to: Vec<u32>,
    stamp: Vec<u32>,
    round: u32,
}

const NONE: u32 = u32::MAX;

impl MaxSearch<'_> {
    /// Unvisited agents reachable from `cur`, with the H count.
    fn collect_reach(&mut self, cur: u32) -> usize {
        for &x in &self.reach {
            self.in_reach[x as usize] = false;
        }
        self.reach.clear();
        let mut h = 0;
        let mut head = 0;
        let mut frontier = cur;
        loop {
            for &j in &self.local.out[frontier as usize] {
                if !self.on_path.get(j) && !self.in_reach[j as usize] {
                    self.in_reach[j as usize] = true;
                    self.reach.push(j);
                    h += self.local.is_h[j as usize] as usize;
                }
            }
            if head == self.reach.len() {
                break;
            }
            frontier = self.reach[head];
            head += 1;
        }
        h
    }

    /// Largest set of reachable agents (H only when `h_only`) that can be
    /// given distinct predecessors among `cur` and the reachable agents.
    /// Every receiver after `cur` needs its own predecessor, so this bounds
    /// how many more can join the path.
    fn matching_bound(&mut self, cur: u32, h_only: bool) -> usize {
        for &x in &self.reach {
            self.matched_to[x as usize] = NONE;
        }
        self.matched_to[cur as usize] = NONE;
        let targets: Vec<u32> = self
            .reach
            .iter()
            .copied()
            .filter(|&t| !h_only || self.local.is_h[t as usize])
            .collect();
        let mut size = 0;
        for t in targets {
            self.round += 1;
            if self.augment(t, cur) {
                size += 1;
            }
        }
        size
    }

    fn augment(&mut self, t: u32, cur: u32) -> bool {
        for k in 0..self.local.inn[t as usize].len() {
            let pred = self.local.inn[t as usize][k];
            if pred != cur && !self.in_reach[pred as usize] {
                continue;
            }
            if self.stamp[pred as usize] == self.round {
                continue;
            }
            self.stamp[pred as usize] = self.round;
            let holder = self.matched_to[pred as usize];
            if holder == NONE || self.augment(holder, cur) {
                self.matched_to[pred as usize] = t;
                return true;
            }
        }
        false
    }

    /// Lexicographic bound on the `(H, total)` receivers a continuation from
    /// `cur` can add: the best cover of `cur` and the reachable agents by
    /// one path from `cur` plus disjoint cycles, solved as an assignment.
    fn cover_bound(&self, cur: u32) -> (usize, usize) {
        let mut nodes = vec![cur];
        nodes.extend(self.reach.iter().copied());
        let n = nodes.len();
        let big = (n + 1) as i64;
        let pos: HashMap<u32, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // cost[u][v]: u gives to v. Column 0 closes the path back to `cur`.
        let forbidden = i64::MAX / 4;
        let mut cost = vec![vec![forbidden; n]; n];
        for u in 0..n {
            cost[u][0] = 0;
            if u > 0 {
                cost[u][u] = 0;
            }
            for &v in &self.local.out[nodes[u] as usize] {
                if let Some(&j) = pos.get(&v) {
                    if j > 0 && j != u {
                        let w = if self.local.is_h[v as usize] {
                            big + 1
                        } else {
                            1
                        };
                        cost[u][j] = -w;
                    }
                }
            }
        }
        let total = -hungarian(&cost);
        (
            (total / (big + 1)) as usize,
            (total % (big + 1)) as usize + (total / (big + 1)) as usize,
        )
    }

    /// True when no extension of the current path can beat the best one.
    /// Cheap bounds are tried first; the assignment bound decides the rest.
    fn hopeless(&mut self, cur: u32, h_count: usize) -> bool {
        let len = self.path.len();
        let rh = self.collect_reach(cur);
        if (h_count + rh, len + self.reach.len()) <= self.best {
            return true;
        }
        let mh = self.matching_bound(cur, true);
        if h_count + mh < self.best.0 {
            return true;
        }
        if h_count + mh == self.best.0 && len + self.matching_bound(cur, false) <= self.best.1 {
            return true;
        }
        let (ch, cn) = self.cover_bound(cur);
        (h_count + ch, len + cn) <= self.best
    }

    fn dfs(&mut self, cur: u32, h_count: usize) -> Result<()> {
        if !self.done.insert((cur, self.on_path.clone())) {
            // The same agents were already visited in a lexicographically
            // smaller order ending at `cur`; the continuations are identical.
            return Ok(());
        }
        self.expansions += 1;
        if self.expansions > self.budget {
            return Err(Error::SearchBudgetExceeded(self.budget));
        }
        let score = (h_count, self.path.len());
        if score > self.best {
            self.best = score;
            self.best_path = self.path.clone();
        }
        if self.hopeless(cur, h_count) {
            return Ok(());
        }
        let local = self.local;
        for &j in &local.out[cur as usize] {
            if self.on_path.get(j) {
                continue;
            }
            self.path.push(j);
            self.on_path.set(j);
            self.dfs(j, h_count + local.is_h[j as usize] as usize)?;
            self.on_path.clear(j);
            self.path.pop();
        }
        Ok(())
    }
}

/// Exact Max-Chains search: among paths from a bridge through `new` into
/// waiting agents, maximize `(H receivers, receivers)` lexicographically.
/// Ties go to the lexicographically smallest id sequence and the lowest
/// bridge id. Returns the path and the number of node expansions.
pub fn find_chain_max(
    g: &CompatibilityGraph,
    new: AgentId,
    budget: u64,
) -> Result<(Option<ChainPath>, u64)> {
    let bridges = bridges_to(g, new);
    let Some(&bridge) = bridges.first() else {
        return Ok((None, 0));
    };
    let local = Local::build(g, new);
    let n = local.ids.len();
    let start = local.ids.binary_search(&new).expect("arrival is indexed") as u32;
    let mut on_path = Bits::new(n);
    on_path.set(start);
    let mut s = MaxSearch {
        local: &local,
        budget,
        expansions: 0,
        path: vec![start],
        on_path,
        done: HashSet::new(),
        best: (0, 0),
        best_path: Vec::new(),
        in_reach: vec![false; n],
        reach: Vec::new(),
        matched_to: vec![NONE; n],
        stamp: vec![0; n],
        round: 0,
    };
    let h0 = local.is_h[start as usize] as usize;
    s.dfs(start, h0)?;
    let mut agents = vec![bridge];
    agents.extend(s.best_path.iter().map(|&i| local.ids[i as usize]));
    let h_count = s.best.0;
    let e_count = s.best.1 - h_count;
    Ok((
        Some(ChainPath {
            agents,
            h_count,
            e_count,
        }),
        s.expansions,
    ))
}

/// Minimum-cost perfect assignment of a square matrix.
fn hungarian(cost: &[Vec<i64>]) -> i64 {
    let n = cost.len();
    let inf = i64::MAX / 2;
    let (mut u, mut v) = (vec![0i64; n + 1], vec![0i64; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}
