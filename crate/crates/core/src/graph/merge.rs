//! Graph union with bounded memory. Nodes deduplicate in memory by id;
//! edges go through an external merge sort — sorted runs of at most
//! `batch_size` edges are spilled to disk, then k-way merged, collapsing
//! equal merge keys as they stream out. At no point do more than
//! `batch_size + runs` edges sit in memory, and `MergeStats` carries the
//! instrumentation to prove it.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::model::Curie;

use super::records::{
    read_edge_file, read_node_file, write_node_file, EdgeMergeKey, EdgeRecord, NodeRecord,
};
use super::GraphError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MergeStats {
    pub nodes_in: u64,
    pub nodes_out: u64,
    /// Scalar node or edge properties that disagreed and kept the
    /// first-seen value.
    pub property_conflicts: u64,
    pub edges_in: u64,
    pub edges_out: u64,
    /// Input edges absorbed into an earlier edge with an equal merge key.
    pub merged_edges: u64,
    pub spill_runs: u64,
    /// High-water mark of edges resident in memory; bounded by
    /// batch_size + spill_runs.
    pub peak_resident_edges: u64,
}

/// Unions property maps: missing keys copy over, list values union in
/// first-seen order, conflicting scalars keep the first value. Returns the
/// conflict count.
pub(crate) fn merge_properties(
    target: &mut BTreeMap<String, Value>,
    incoming: &BTreeMap<String, Value>,
) -> u64 {
    let mut conflicts = 0;
    for (key, value) in incoming {
        match target.get_mut(key) {
            None => {
                target.insert(key.clone(), value.clone());
            }
            Some(Value::Array(existing)) if value.is_array() => {
                for item in value.as_array().expect("checked") {
                    if !existing.contains(item) {
                        existing.push(item.clone());
                    }
                }
            }
            Some(existing) => {
                if existing != value {
                    conflicts += 1;
                }
            }
        }
    }
    conflicts
}

pub(crate) fn merge_node_into(target: &mut NodeRecord, incoming: &NodeRecord) -> u64 {
    let mut conflicts = 0;
    match (&target.name, &incoming.name) {
        (None, Some(_)) => target.name = incoming.name.clone(),
        (Some(a), Some(b)) if a != b => conflicts += 1,
        _ => {}
    }
    for category in &incoming.categories {
        if !target.categories.contains(category) {
            target.categories.push(category.clone());
        }
    }
    conflicts + merge_properties(&mut target.properties, &incoming.properties)
}

fn union_strings(target: &mut Vec<String>, incoming: &[String]) {
    for item in incoming {
        if !target.contains(item) {
            target.push(item.clone());
        }
    }
}

/// Absorbs a later edge with the same merge key: provenance unions,
/// payload properties follow the node policy.
fn merge_edge_into(target: &mut EdgeRecord, incoming: &EdgeRecord) -> u64 {
    union_strings(
        &mut target.aggregator_knowledge_sources,
        &incoming.aggregator_knowledge_sources,
    );
    union_strings(&mut target.publications, &incoming.publications);
    merge_properties(&mut target.properties, &incoming.properties)
}

struct SpilledRun {
    reader: BufReader<File>,
}

impl SpilledRun {
    fn next_edge(&mut self) -> Result<Option<EdgeRecord>, GraphError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let edge = serde_json::from_str(line.trim_end_matches('\n'))
            .map_err(std::io::Error::from)?;
        Ok(Some(edge))
    }
}

/// Tracks both phases' residency: run buffering and the merge heap.
struct Residency {
    current: u64,
    peak: u64,
}

impl Residency {
    fn add(&mut self, n: u64) {
        self.current += n;
        self.peak = self.peak.max(self.current);
    }

    fn drop(&mut self, n: u64) {
        self.current -= n;
    }
}

/// Merges already-normalized graphs. Node files dedup by id in memory;
/// edge files stream through spill files in `spill_dir` (created, private
/// to this call, removed on success). Outputs are canonically sorted:
/// nodes by id, edges by merge key.
pub fn merge_graphs(
    inputs: &[(impl AsRef<Path>, impl AsRef<Path>)],
    batch_size: usize,
    spill_dir: impl AsRef<Path>,
    nodes_out: impl AsRef<Path>,
    edges_out: impl AsRef<Path>,
) -> Result<MergeStats, GraphError> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut stats = MergeStats::default();

    let mut nodes: BTreeMap<Curie, NodeRecord> = BTreeMap::new();
    for (node_path, _) in inputs {
        for node in read_node_file(node_path)? {
            let node = node?;
            stats.nodes_in += 1;
            match nodes.get_mut(&node.id) {
                Some(existing) => stats.property_conflicts += merge_node_into(existing, &node),
                None => {
                    nodes.insert(node.id.clone(), node);
                }
            }
        }
    }
    stats.nodes_out = write_node_file(&nodes_out, nodes.values())?;
    drop(nodes);

    let spill_dir = spill_dir.as_ref();
    std::fs::create_dir_all(spill_dir).map_err(|e| GraphError::SpillDirUnwritable {
        path: spill_dir.to_path_buf(),
        source: e,
    })?;

    // Phase 1: cut the concatenated edge stream into sorted runs.
    let mut residency = Residency { current: 0, peak: 0 };
    let mut run_paths: Vec<PathBuf> = Vec::new();
    let mut buffer: Vec<(EdgeMergeKey, EdgeRecord)> = Vec::with_capacity(batch_size.min(65_536));
    for (_, edge_path) in inputs {
        for edge in read_edge_file(edge_path)? {
            let edge = edge?;
            stats.edges_in += 1;
            buffer.push((edge.merge_key(), edge));
            residency.add(1);
            if buffer.len() == batch_size {
                spill_run(spill_dir, &mut run_paths, &mut buffer)?;
                residency.drop(batch_size as u64);
            }
        }
    }
    if !buffer.is_empty() {
        residency.drop(buffer.len() as u64);
        spill_run(spill_dir, &mut run_paths, &mut buffer)?;
    }
    stats.spill_runs = run_paths.len() as u64;

    // Phase 2: k-way merge; the run index breaks key ties so first-seen
    // always means first-in-input.
    let mut heap: BinaryHeap<Reverse<(EdgeMergeKey, usize)>> = BinaryHeap::new();
    let mut heads: Vec<Option<EdgeRecord>> = Vec::with_capacity(run_paths.len());
    let mut runs: Vec<SpilledRun> = Vec::with_capacity(run_paths.len());
    for (run_index, path) in run_paths.iter().enumerate() {
        let mut run = SpilledRun {
            reader: BufReader::new(File::open(path)?),
        };
        if let Some(edge) = run.next_edge()? {
            residency.add(1);
            heap.push(Reverse((edge.merge_key(), run_index)));
            heads.push(Some(edge));
        } else {
            heads.push(None);
        }
        runs.push(run);
    }

    let mut out = BufWriter::new(File::create(&edges_out)?);
    let mut pending: Option<(EdgeMergeKey, EdgeRecord)> = None;
    while let Some(Reverse((key, run_index))) = heap.pop() {
        let edge = heads[run_index].take().expect("head present while queued");
        if let Some(next) = runs[run_index].next_edge()? {
            residency.add(1);
            heap.push(Reverse((next.merge_key(), run_index)));
            heads[run_index] = Some(next);
        }
        match &mut pending {
            Some((pending_key, pending_edge)) if *pending_key == key => {
                stats.merged_edges += 1;
                stats.property_conflicts += merge_edge_into(pending_edge, &edge);
                residency.drop(1);
            }
            Some((_, ready)) => {
                serde_json::to_writer(&mut out, ready).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
                stats.edges_out += 1;
                residency.drop(1);
                pending = Some((key, edge));
            }
            None => pending = Some((key, edge)),
        }
    }
    if let Some((_, ready)) = pending {
        serde_json::to_writer(&mut out, &ready).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        stats.edges_out += 1;
        residency.drop(1);
    }
    out.flush()?;
    stats.peak_resident_edges = residency.peak;

    for path in run_paths {
        std::fs::remove_file(path)?;
    }
    Ok(stats)
}

fn spill_run(
    spill_dir: &Path,
    run_paths: &mut Vec<PathBuf>,
    buffer: &mut Vec<(EdgeMergeKey, EdgeRecord)>,
) -> Result<(), GraphError> {
    buffer.sort_by(|a, b| a.0.cmp(&b.0));
    let path = spill_dir.join(format!("run-{:05}.jsonl", run_paths.len()));
    let mut out = BufWriter::new(File::create(&path).map_err(|e| {
        GraphError::SpillDirUnwritable {
            path: spill_dir.to_path_buf(),
            source: e,
        }
    })?);
    for (_, edge) in buffer.drain(..) {
        serde_json::to_writer(&mut out, &edge).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    run_paths.push(path);
    Ok(())
}
