//! Discrete-event simulation of a multi-node container cluster.
//!
//! Stage and exploration jobs arrive as vCPU-sized [`ContainerRequest`]s
//! with optional dependencies. The simulator places ready requests onto
//! [`Node`]s first-fit-decreasing by vCPU demand at every decision
//! instant (start of time, and each task completion), runs each
//! container uninterrupted for its duration, and reports a totally
//! ordered [`ScheduleEvent`] log plus the makespan. [`speedup`] compares
//! two cluster shapes on the same workload.
//!
//! The simulator is the only shipped executor; [`ClusterExecutor`] is the
//! seam where a real container platform would plug in.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// One machine in the cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub vcpu_capacity: u32,
    /// vCPUs currently committed; starts at zero and never exceeds the
    /// capacity during simulation.
    #[serde(default)]
    pub allocated: u32,
}

impl Node {
    pub fn new(id: impl Into<String>, vcpu_capacity: u32) -> Self {
        Node { id: id.into(), vcpu_capacity, allocated: 0 }
    }
}

/// A container-sized piece of work: `vcpus` for `duration_s` seconds,
/// runnable once every dependency has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerRequest {
    pub task_id: String,
    pub vcpus: u32,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub dependencies: BTreeSet<String>,
}

impl ContainerRequest {
    pub fn new(task_id: impl Into<String>, vcpus: u32, duration_s: f64) -> Self {
        ContainerRequest {
            task_id: task_id.into(),
            vcpus,
            duration_s,
            dependencies: BTreeSet::new(),
        }
    }

    pub fn after(mut self, dep: impl Into<String>) -> Self {
        self.dependencies.insert(dep.into());
        self
    }
}

/// What happened to a task, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Admitted to the scheduler (all submissions happen at time zero).
    Submitted,
    /// Freed its node after running to completion.
    Finished,
    /// Placed on a node and began running.
    Started { node_id: String },
    /// Ready but left waiting because no node had enough free vCPUs;
    /// logged at most once per task, at the first such instant.
    Blocked,
}

impl EventKind {
    /// Order of events sharing a timestamp: submissions are admissions,
    /// finishes free capacity that same instant, starts consume it, and
    /// blocked verdicts describe what still did not fit afterwards.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Submitted => 0,
            EventKind::Finished => 1,
            EventKind::Started { .. } => 2,
            EventKind::Blocked => 3,
        }
    }
}

/// One line of the schedule log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub time_s: f64,
    pub task_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// The simulation's full outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub events: Vec<ScheduleEvent>,
    pub makespan_s: f64,
}

/// Scheduling failure modes.
#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("cluster has no nodes")]
    EmptyCluster,
    #[error("node `{0}` is invalid: {1}")]
    InvalidNode(String, String),
    #[error("request `{0}` is invalid: {1}")]
    InvalidRequest(String, String),
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("task `{task_id}` depends on unknown task `{dependency}`")]
    UnknownDependency { task_id: String, dependency: String },
    #[error("dependency graph has a cycle through {0} task(s)")]
    CyclicDependencies(usize),
    #[error("task `{task_id}` needs {vcpus} vCPUs but the largest node offers {max_capacity}")]
    UnschedulableRequest { task_id: String, vcpus: u32, max_capacity: u32 },
    #[error("malformed cluster topology: {0}")]
    MalformedTopology(String),
}

fn validate(nodes: &[Node], requests: &[ContainerRequest]) -> Result<(), ClusterError> {
    if nodes.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let mut node_ids = BTreeSet::new();
    for n in nodes {
        if n.vcpu_capacity == 0 {
            return Err(ClusterError::InvalidNode(n.id.clone(), "zero vCPU capacity".into()));
        }
        if !node_ids.insert(n.id.as_str()) {
            return Err(ClusterError::InvalidNode(n.id.clone(), "duplicate node id".into()));
        }
    }
    let max_capacity = nodes.iter().map(|n| n.vcpu_capacity).max().unwrap_or(0);
    let mut ids = BTreeSet::new();
    for r in requests {
        if r.vcpus == 0 {
            return Err(ClusterError::InvalidRequest(r.task_id.clone(), "zero vCPUs".into()));
        }
        if r.duration_s <= 0.0 || !r.duration_s.is_finite() {
            return Err(ClusterError::InvalidRequest(
                r.task_id.clone(),
                format!("duration {} must be a positive finite number", r.duration_s),
            ));
        }
        if !ids.insert(r.task_id.as_str()) {
            return Err(ClusterError::DuplicateTask(r.task_id.clone()));
        }
        if r.vcpus > max_capacity {
            return Err(ClusterError::UnschedulableRequest {
                task_id: r.task_id.clone(),
                vcpus: r.vcpus,
                max_capacity,
            });
        }
    }
    for r in requests {
        for dep in &r.dependencies {
            if !ids.contains(dep.as_str()) {
                return Err(ClusterError::UnknownDependency {
                    task_id: r.task_id.clone(),
                    dependency: dep.clone(),
                });
            }
        }
    }
    // Kahn's algorithm: if a topological order does not cover every task,
    // the leftovers form at least one cycle.
    let mut blocked_by: BTreeMap<&str, usize> =
        requests.iter().map(|r| (r.task_id.as_str(), r.dependencies.len())).collect();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in requests {
        for dep in &r.dependencies {
            dependents.entry(dep.as_str()).or_default().push(r.task_id.as_str());
        }
    }
    let mut queue: Vec<&str> =
        blocked_by.iter().filter(|(_, &c)| c == 0).map(|(&id, _)| id).collect();
    let mut ordered = 0usize;
    while let Some(id) = queue.pop() {
        ordered += 1;
        for &child in dependents.get(id).into_iter().flatten() {
            let c = blocked_by.get_mut(child).expect("child is a known task");
            *c -= 1;
            if *c == 0 {
                queue.push(child);
            }
        }
    }
    if ordered != requests.len() {
        return Err(ClusterError::CyclicDependencies(requests.len() - ordered));
    }
    Ok(())
}

/// Run the workload to completion and return the event log and makespan.
///
/// At every decision instant (time zero, then each completion time) the
/// ready tasks are sorted by descending vCPU demand (ties by task id) and
/// placed first-fit onto the nodes in their listed order. A ready task
/// that fits nowhere logs one `Blocked` event at its first such instant
/// and waits for capacity. The returned log is totally ordered by
/// (time, event rank, task id).
pub fn simulate(
    nodes: &[Node],
    requests: &[ContainerRequest],
) -> Result<SimulationResult, ClusterError> {
    validate(nodes, requests)?;

    let mut events: Vec<ScheduleEvent> = Vec::with_capacity(requests.len() * 3);
    for r in requests {
        events.push(ScheduleEvent {
            time_s: 0.0,
            task_id: r.task_id.clone(),
            kind: EventKind::Submitted,
        });
    }

    let by_id: BTreeMap<&str, &ContainerRequest> =
        requests.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut waiting_on: BTreeMap<&str, usize> =
        requests.iter().map(|r| (r.task_id.as_str(), r.dependencies.len())).collect();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in requests {
        for dep in &r.dependencies {
            dependents.entry(dep.as_str()).or_default().push(r.task_id.as_str());
        }
    }

    let mut free: Vec<u32> = nodes.iter().map(|n| n.vcpu_capacity).collect();
    let mut ready: BTreeSet<&str> = waiting_on
        .iter()
        .filter(|(_, &c)| c == 0)
        .map(|(&id, _)| id)
        .collect();
    // (finish time, task id, node index, vcpus), kept sorted ascending.
    let mut running: Vec<(f64, &str, usize, u32)> = Vec::new();
    let mut blocked_logged: BTreeSet<&str> = BTreeSet::new();
    let mut makespan = 0.0f64;

    #[allow(clippy::too_many_arguments)] // local helper: the scheduling loop's full working state
    fn place_ready<'a>(
        now: f64,
        nodes: &[Node],
        by_id: &BTreeMap<&'a str, &'a ContainerRequest>,
        ready: &mut BTreeSet<&'a str>,
        free: &mut [u32],
        running: &mut Vec<(f64, &'a str, usize, u32)>,
        blocked_logged: &mut BTreeSet<&'a str>,
        events: &mut Vec<ScheduleEvent>,
    ) {
        let mut ordered: Vec<&str> = ready.iter().copied().collect();
        ordered.sort_by(|a, b| {
            let (ra, rb) = (by_id[a], by_id[b]);
            rb.vcpus.cmp(&ra.vcpus).then_with(|| a.cmp(b))
        });
        for id in ordered {
            let r = by_id[id];
            match free.iter().position(|&f| f >= r.vcpus) {
                Some(slot) => {
                    free[slot] -= r.vcpus;
                    ready.remove(id);
                    running.push((now + r.duration_s, id, slot, r.vcpus));
                    events.push(ScheduleEvent {
                        time_s: now,
                        task_id: id.to_string(),
                        kind: EventKind::Started { node_id: nodes[slot].id.clone() },
                    });
                }
                None => {
                    if blocked_logged.insert(id) {
                        events.push(ScheduleEvent {
                            time_s: now,
                            task_id: id.to_string(),
                            kind: EventKind::Blocked,
                        });
                    }
                }
            }
        }
    }

    place_ready(0.0, nodes, &by_id, &mut ready, &mut free, &mut running, &mut blocked_logged, &mut events);

    while !running.is_empty() {
        let now = running
            .iter()
            .map(|&(t, ..)| t)
            .fold(f64::INFINITY, f64::min);
        makespan = makespan.max(now);
        let mut finishing: Vec<(f64, &str, usize, u32)> =
            running.iter().copied().filter(|&(t, ..)| t == now).collect();
        running.retain(|&(t, ..)| t != now);
        finishing.sort_by(|a, b| a.1.cmp(b.1));
        for (_, id, slot, vcpus) in finishing {
            free[slot] += vcpus;
            events.push(ScheduleEvent {
                time_s: now,
                task_id: id.to_string(),
                kind: EventKind::Finished,
            });
            for &child in dependents.get(id).into_iter().flatten() {
                let c = waiting_on.get_mut(child).expect("child is a known task");
                *c -= 1;
                if *c == 0 {
                    ready.insert(child);
                }
            }
        }
        place_ready(now, nodes, &by_id, &mut ready, &mut free, &mut running, &mut blocked_logged, &mut events);
    }

    events.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then_with(|| a.kind.rank().cmp(&b.kind.rank()))
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    Ok(SimulationResult { events, makespan_s: makespan })
}

/// Makespan ratio of running `requests` on `baseline` versus `cluster`:
/// `makespan(baseline) / makespan(cluster)`. The baseline is typically a
/// single node of the same shape.
pub fn speedup(
    cluster: &[Node],
    baseline: &[Node],
    requests: &[ContainerRequest],
) -> Result<f64, ClusterError> {
    let multi = simulate(cluster, requests)?;
    let single = simulate(baseline, requests)?;
    if single.makespan_s == 0.0 && multi.makespan_s == 0.0 {
        return Ok(1.0); // empty workload: neither cluster is faster
    }
    Ok(single.makespan_s / multi.makespan_s)
}

/// Read a cluster topology from its JSON form: a list of
/// `{id, vcpu_capacity}` objects.
pub fn load_cluster<R: std::io::Read>(reader: R) -> Result<Vec<Node>, ClusterError> {
    serde_json::from_reader(reader).map_err(|e| ClusterError::MalformedTopology(e.to_string()))
}

/// Event log as JSON lines, one event per line — the monitor-friendly
/// export format.
pub fn events_to_jsonl(events: &[ScheduleEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("schedule events serialize"));
        out.push('\n');
    }
    out
}

/// Integration seam for a real container platform: queue requests, then
/// collect the completed schedule. The simulator is the only shipped
/// implementation; a real executor would submit containers remotely and
/// surface their events through the same interface.
pub trait ClusterExecutor {
    /// Queue one request, validating it against the cluster shape.
    fn submit(&mut self, request: ContainerRequest) -> Result<(), ClusterError>;
    /// Events observed so far (complete only after [`collect`](Self::collect)).
    fn poll(&self) -> &[ScheduleEvent];
    /// Run everything queued to completion.
    fn collect(&mut self) -> Result<SimulationResult, ClusterError>;
}

/// [`ClusterExecutor`] backed by [`simulate`].
#[derive(Debug, Clone)]
pub struct SimulatedExecutor {
    nodes: Vec<Node>,
    queued: Vec<ContainerRequest>,
    observed: Vec<ScheduleEvent>,
}

impl SimulatedExecutor {
    pub fn new(nodes: Vec<Node>) -> Self {
        SimulatedExecutor { nodes, queued: Vec::new(), observed: Vec::new() }
    }
}

impl ClusterExecutor for SimulatedExecutor {
    fn submit(&mut self, request: ContainerRequest) -> Result<(), ClusterError> {
        let max_capacity = self.nodes.iter().map(|n| n.vcpu_capacity).max().unwrap_or(0);
        if request.vcpus > max_capacity {
            return Err(ClusterError::UnschedulableRequest {
                task_id: request.task_id,
                vcpus: request.vcpus,
                max_capacity,
            });
        }
        if self.queued.iter().any(|r| r.task_id == request.task_id) {
            return Err(ClusterError::DuplicateTask(request.task_id));
        }
        self.queued.push(request);
        Ok(())
    }

    fn poll(&self) -> &[ScheduleEvent] {
        &self.observed
    }

    fn collect(&mut self) -> Result<SimulationResult, ClusterError> {
        let result = simulate(&self.nodes, &self.queued)?;
        self.observed = result.events.clone();
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn uniform_cluster(nodes: usize, capacity: u32) -> Vec<Node> {
        (0..nodes).map(|i| Node::new(format!("n{}", i + 1), capacity)).collect()
    }

    fn eight_uniform_tasks() -> Vec<ContainerRequest> {
        (0..8).map(|i| ContainerRequest::new(format!("t{i}"), 4, 100.0)).collect()
    }

    #[test]
    fn eight_uniform_tasks_on_four_nodes_run_fully_parallel() {
        let result = simulate(&uniform_cluster(4, 8), &eight_uniform_tasks()).unwrap();
        assert_eq!(result.makespan_s, 100.0);
        // Two 4-vCPU tasks share each 8-vCPU node from time zero.
        let starts = result
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Started { .. }))
            .count();
        assert_eq!(starts, 8);
        assert!(result.events.iter().all(|e| !matches!(e.kind, EventKind::Blocked)));
    }

    #[test]
    fn speedup_of_four_nodes_over_one_is_exactly_four() {
        let tasks = eight_uniform_tasks();
        let one_node = simulate(&uniform_cluster(1, 8), &tasks).unwrap();
        assert_eq!(one_node.makespan_s, 400.0);
        let ratio = speedup(&uniform_cluster(4, 8), &uniform_cluster(1, 8), &tasks).unwrap();
        assert_eq!(ratio, 4.0);
    }

    #[test]
    fn dependent_chain_is_serial_on_any_cluster() {
        let tasks = vec![
            ContainerRequest::new("a", 2, 10.0),
            ContainerRequest::new("b", 2, 20.0).after("a"),
            ContainerRequest::new("c", 2, 30.0).after("b"),
        ];
        let wide = simulate(&uniform_cluster(4, 8), &tasks).unwrap();
        assert_eq!(wide.makespan_s, 60.0);
        let ratio = speedup(&uniform_cluster(4, 8), &uniform_cluster(1, 8), &tasks).unwrap();
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn single_task_speedup_is_one() {
        let tasks = vec![ContainerRequest::new("only", 4, 50.0)];
        let ratio = speedup(&uniform_cluster(4, 8), &uniform_cluster(1, 8), &tasks).unwrap();
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn speedup_never_exceeds_node_or_task_count() {
        // One task slot per node: k nodes, n single-slot tasks.
        let k = 4usize;
        for n in 1..=12usize {
            let tasks: Vec<ContainerRequest> =
                (0..n).map(|i| ContainerRequest::new(format!("t{i}"), 4, 100.0)).collect();
            let ratio = speedup(&uniform_cluster(k, 4), &uniform_cluster(1, 4), &tasks).unwrap();
            let cap = k.min(n) as f64;
            assert!(ratio <= cap + 1e-12, "n={n}: speedup {ratio} exceeds {cap}");
            if n % k == 0 {
                assert_eq!(ratio, cap, "n={n}: divisible workloads should hit the cap");
            }
        }
    }

    #[test]
    fn validation_rejects_malformed_inputs() {
        let nodes = uniform_cluster(2, 8);
        let ok = ContainerRequest::new("a", 4, 10.0);

        assert!(matches!(simulate(&[], std::slice::from_ref(&ok)), Err(ClusterError::EmptyCluster)));
        assert!(matches!(
            simulate(&[Node::new("n1", 0)], std::slice::from_ref(&ok)),
            Err(ClusterError::InvalidNode(..))
        ));
        let dup_node = vec![Node::new("n1", 8), Node::new("n1", 8)];
        assert!(matches!(simulate(&dup_node, std::slice::from_ref(&ok)), Err(ClusterError::InvalidNode(..))));

        assert!(matches!(
            simulate(&nodes, &[ContainerRequest::new("z", 0, 10.0)]),
            Err(ClusterError::InvalidRequest(..))
        ));
        assert!(matches!(
            simulate(&nodes, &[ContainerRequest::new("z", 4, 0.0)]),
            Err(ClusterError::InvalidRequest(..))
        ));
        assert!(matches!(
            simulate(&nodes, &[ok.clone(), ok.clone()]),
            Err(ClusterError::DuplicateTask(_))
        ));
        assert!(matches!(
            simulate(&nodes, &[ContainerRequest::new("z", 16, 10.0)]),
            Err(ClusterError::UnschedulableRequest { vcpus: 16, max_capacity: 8, .. })
        ));
        assert!(matches!(
            simulate(&nodes, &[ok.clone().after("ghost")]),
            Err(ClusterError::UnknownDependency { .. })
        ));
        let cycle = vec![
            ContainerRequest::new("a", 2, 1.0).after("b"),
            ContainerRequest::new("b", 2, 1.0).after("a"),
        ];
        assert!(matches!(simulate(&nodes, &cycle), Err(ClusterError::CyclicDependencies(2))));
    }

    #[test]
    fn capacity_blocked_tasks_log_blocked_exactly_once() {
        let tasks: Vec<ContainerRequest> =
            (0..3).map(|i| ContainerRequest::new(format!("t{i}"), 8, 10.0)).collect();
        let result = simulate(&uniform_cluster(1, 8), &tasks).unwrap();
        assert_eq!(result.makespan_s, 30.0);
        let blocked: Vec<&ScheduleEvent> = result
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Blocked))
            .collect();
        // t0 starts immediately; t1 and t2 wait at time zero and must log
        // exactly one Blocked each, both at the first decision instant.
        assert_eq!(blocked.len(), 2);
        assert!(blocked.iter().all(|e| e.time_s == 0.0));
        let ids: BTreeSet<&str> = blocked.iter().map(|e| e.task_id.as_str()).collect();
        assert_eq!(ids, BTreeSet::from(["t1", "t2"]));
    }

    /// Replay an event log, asserting capacity safety at every instant
    /// and first-fit-decreasing work conservation at every decision
    /// instant (after placements, no still-waiting ready task fits).
    fn replay_and_check(nodes: &[Node], requests: &[ContainerRequest], result: &SimulationResult) {
        let by_id: BTreeMap<&str, &ContainerRequest> =
            requests.iter().map(|r| (r.task_id.as_str(), r)).collect();
        let node_index: BTreeMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut free: Vec<i64> = nodes.iter().map(|n| n.vcpu_capacity as i64).collect();
        let mut finished: BTreeSet<&str> = BTreeSet::new();
        let mut started: BTreeSet<&str> = BTreeSet::new();

        // Group events by timestamp; each group is one decision instant.
        let mut i = 0;
        while i < result.events.len() {
            let t = result.events[i].time_s;
            let mut j = i;
            while j < result.events.len() && result.events[j].time_s == t {
                j += 1;
            }
            for e in &result.events[i..j] {
                match &e.kind {
                    EventKind::Submitted | EventKind::Blocked => {}
                    EventKind::Finished => {
                        let r = by_id[e.task_id.as_str()];
                        let slot = result.events[..j]
                            .iter()
                            .find_map(|s| match &s.kind {
                                EventKind::Started { node_id } if s.task_id == e.task_id => {
                                    Some(node_index[node_id.as_str()])
                                }
                                _ => None,
                            })
                            .expect("finished task must have started");
                        free[slot] += r.vcpus as i64;
                        finished.insert(e.task_id.as_str());
                    }
                    EventKind::Started { node_id } => {
                        let r = by_id[e.task_id.as_str()];
                        let slot = node_index[node_id.as_str()];
                        free[slot] -= r.vcpus as i64;
                        assert!(
                            free[slot] >= 0,
                            "node `{node_id}` over-committed at t={t}: {} free",
                            free[slot]
                        );
                        started.insert(e.task_id.as_str());
                    }
                }
            }
            // Work conservation: after this instant's placements, every
            // ready-but-waiting task must be too big for every node.
            let max_free = free.iter().copied().max().unwrap_or(0);
            for r in requests {
                let ready = !started.contains(r.task_id.as_str())
                    && r.dependencies.iter().all(|d| finished.contains(d.as_str()));
                if ready {
                    assert!(
                        (r.vcpus as i64) > max_free,
                        "task `{}` ({} vCPUs) left waiting at t={t} with {max_free} vCPUs free",
                        r.task_id,
                        r.vcpus
                    );
                }
            }
            i = j;
        }
        assert_eq!(finished.len(), requests.len(), "every task must finish");
    }

    #[test]
    fn random_workloads_satisfy_bounds_conservation_and_determinism() {
        let mut rng = StdRng::seed_from_u64(4242);
        for case in 0..100 {
            let node_count = rng.gen_range(1..=4);
            let capacity = rng.gen_range(4..=16u32);
            let nodes = uniform_cluster(node_count, capacity);
            let task_count = rng.gen_range(1..=20);
            let mut requests: Vec<ContainerRequest> = Vec::with_capacity(task_count);
            for i in 0..task_count {
                let vcpus = rng.gen_range(1..=capacity);
                let duration = rng.gen_range(1.0..100.0f64);
                let mut req = ContainerRequest::new(format!("t{i}"), vcpus, duration);
                for d in 0..i {
                    if rng.gen_bool(0.2) {
                        req = req.after(format!("t{d}"));
                    }
                }
                requests.push(req);
            }

            let result = simulate(&nodes, &requests).unwrap();
            let again = simulate(&nodes, &requests).unwrap();
            assert_eq!(result, again, "case {case}: simulation must be deterministic");

            // Classic lower bounds.
            let mut finish_depth: BTreeMap<&str, f64> = BTreeMap::new();
            for r in &requests {
                // Requests only depend on earlier tasks, so one pass in
                // order computes the critical path.
                let dep_floor = r
                    .dependencies
                    .iter()
                    .map(|d| finish_depth[d.as_str()])
                    .fold(0.0f64, f64::max);
                finish_depth.insert(r.task_id.as_str(), dep_floor + r.duration_s);
            }
            let critical_path = finish_depth.values().copied().fold(0.0f64, f64::max);
            let total_work: f64 = requests.iter().map(|r| r.duration_s * r.vcpus as f64).sum();
            let total_capacity: f64 = nodes.iter().map(|n| n.vcpu_capacity as f64).sum();
            assert!(
                result.makespan_s >= critical_path - 1e-9,
                "case {case}: makespan {} below critical path {critical_path}",
                result.makespan_s
            );
            assert!(
                result.makespan_s >= total_work / total_capacity - 1e-9,
                "case {case}: makespan {} below work/capacity {}",
                result.makespan_s,
                total_work / total_capacity
            );

            replay_and_check(&nodes, &requests, &result);
        }
    }

    #[test]
    fn event_log_is_totally_ordered_with_full_per_task_lifecycles() {
        let tasks = vec![
            ContainerRequest::new("alpha", 8, 25.0),
            ContainerRequest::new("beta", 8, 25.0),
            ContainerRequest::new("gamma", 4, 10.0).after("alpha"),
        ];
        let result = simulate(&uniform_cluster(1, 8), &tasks).unwrap();

        for pair in result.events.windows(2) {
            let key = |e: &ScheduleEvent| (e.time_s, e.kind.rank(), e.task_id.clone());
            assert!(key(&pair[0]) <= key(&pair[1]), "events out of order: {pair:?}");
        }
        for task in ["alpha", "beta", "gamma"] {
            let times: BTreeMap<u8, f64> = result
                .events
                .iter()
                .filter(|e| e.task_id == task)
                .map(|e| (e.kind.rank(), e.time_s))
                .collect();
            let submitted = times[&EventKind::Submitted.rank()];
            let started = times[&2];
            let finished = times[&EventKind::Finished.rank()];
            assert!(submitted <= started && started < finished, "{task}: {times:?}");
        }
        // Exactly one Submitted/Started/Finished per task.
        for rank in [0u8, 1, 2] {
            let count = result.events.iter().filter(|e| e.kind.rank() == rank).count();
            assert_eq!(count, tasks.len(), "rank {rank}");
        }
    }

    #[test]
    fn topology_files_parse_and_events_export_as_json_lines() {
        let text = r#"[
            {"id": "n1", "vcpu_capacity": 8},
            {"id": "n2", "vcpu_capacity": 8}
        ]"#;
        let nodes = load_cluster(text.as_bytes()).unwrap();
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[0], Node::new("n1", 8));
        assert!(matches!(
            load_cluster(&b"[{\"id\": 3}]"[..]),
            Err(ClusterError::MalformedTopology(_))
        ));

        let result = simulate(&nodes, &eight_uniform_tasks()).unwrap();
        let jsonl = events_to_jsonl(&result.events);
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), result.events.len());
        let first: ScheduleEvent = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first, result.events[0]);
    }

    #[test]
    fn executor_seam_queues_validates_and_collects() {
        let mut exec = SimulatedExecutor::new(uniform_cluster(4, 8));
        assert!(exec.poll().is_empty());
        for r in eight_uniform_tasks() {
            exec.submit(r).unwrap();
        }
        assert!(matches!(
            exec.submit(ContainerRequest::new("t0", 4, 1.0)),
            Err(ClusterError::DuplicateTask(_))
        ));
        assert!(matches!(
            exec.submit(ContainerRequest::new("huge", 32, 1.0)),
            Err(ClusterError::UnschedulableRequest { .. })
        ));
        let collected = exec.collect().unwrap();
        let direct = simulate(&uniform_cluster(4, 8), &eight_uniform_tasks()).unwrap();
        assert_eq!(collected, direct);
        assert_eq!(exec.poll(), &direct.events[..]);
    }
}
