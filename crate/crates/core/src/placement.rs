//! Symmetric Map-phase file placement and synthetic intermediate values.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{enum_subsets, NodeSet, SystemParams};

/// Which node stores which file, and which outputs each node reduces.
#[derive(Debug, Clone, Serialize)]
pub struct PlacementMap {
    /// Entry `n - 1` is the storage set of file `n`.
    pub file_to_nodes: Vec<NodeSet>,
    /// Entry `k - 1` lists the files stored at node `k`.
    #[serde(skip)]
    pub node_to_files: Vec<Vec<u64>>,
    /// Entry `k - 1` lists the outputs reduced at node `k`.
    pub reduce_assignment: Vec<Vec<u64>>,
    #[serde(skip)]
    subset_files: BTreeMap<NodeSet, Vec<u64>>,
}

impl PlacementMap {
    pub fn k(&self) -> usize {
        self.node_to_files.len()
    }

    /// `M_k`.
    pub fn files_of(&self, node: usize) -> &[u64] {
        &self.node_to_files[node - 1]
    }

    /// `W_k`.
    pub fn outputs_of(&self, node: usize) -> &[u64] {
        &self.reduce_assignment[node - 1]
    }

    /// The files stored exactly at the node set `u`.
    pub fn files_at(&self, u: &NodeSet) -> &[u64] {
        self.subset_files.get(u).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn stores(&self, node: usize, file: u64) -> bool {
        self.file_to_nodes[file as usize - 1].contains(node)
    }

    /// IVs making up the bundle destined to `dest` from files stored at `u`,
    /// in concatenation order: outputs ascending, then files ascending.
    pub fn bundle_ivs(&self, dest: usize, u: &NodeSet) -> Vec<(u64, u64)> {
        let files = self.files_at(u);
        self.outputs_of(dest)
            .iter()
            .flat_map(|&q| files.iter().map(move |&n| (q, n)))
            .collect()
    }
}

pub fn build_placement(params: &SystemParams) -> Result<PlacementMap> {
    let (eta1, eta2) = params.integral_etas()?;
    let k = params.k as usize;
    let subsets = enum_subsets(&NodeSet::range(k), params.r as usize)?;
    let mut file_to_nodes = Vec::with_capacity(params.n as usize);
    let mut node_to_files = vec![Vec::new(); k];
    let mut subset_files = BTreeMap::new();
    let mut next = 1u64;
    for u in subsets {
        let files: Vec<u64> = (next..next + eta1).collect();
        next += eta1;
        for &n in &files {
            for node in u.iter() {
                node_to_files[node - 1].push(n);
            }
            file_to_nodes.push(u.clone());
        }
        subset_files.insert(u, files);
    }
    let reduce_assignment = (0..k as u64)
        .map(|i| (i * eta2 + 1..=(i + 1) * eta2).collect())
        .collect();
    Ok(PlacementMap {
        file_to_nodes,
        node_to_files,
        reduce_assignment,
        subset_files,
    })
}

/// Deterministic synthetic IV `v_{q,n}` of `len` bytes.
pub fn intermediate_value(seed: u64, q: u64, n: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u64;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(q.to_le_bytes());
        h.update(n.to_le_bytes());
        h.update(counter.to_le_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// The IVs each node computed in the Map phase.
#[derive(Debug, Clone)]
pub struct IvStore {
    iv_bytes: usize,
    nodes: Vec<HashMap<(u64, u64), Vec<u8>>>,
}

impl IvStore {
    pub fn iv_bytes(&self) -> usize {
        self.iv_bytes
    }

    pub fn get(&self, node: usize, q: u64, n: u64) -> Option<&[u8]> {
        self.nodes[node - 1].get(&(q, n)).map(Vec::as_slice)
    }

    pub fn count(&self, node: usize) -> usize {
        self.nodes[node - 1].len()
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().map(HashMap::len).sum()
    }
}

pub fn map_phase(placement: &PlacementMap, params: &SystemParams, seed: u64) -> Result<IvStore> {
    if !params.b.is_multiple_of(8) {
        return Err(Error::param(format!("B = {} is not a multiple of 8", params.b)));
    }
    let iv_bytes = (params.b / 8) as usize;
    let nodes = (1..=placement.k())
        .map(|k| {
            placement
                .files_of(k)
                .iter()
                .flat_map(|&n| (1..=params.q).map(move |q| (q, n)))
                .map(|(q, n)| ((q, n), intermediate_value(seed, q, n, iv_bytes)))
                .collect()
        })
        .collect();
    Ok(IvStore { iv_bytes, nodes })
}

/// IVs node `k` needs but did not compute.
pub fn required_ivs(placement: &PlacementMap, k: usize) -> BTreeSet<(u64, u64)> {
    let n_files = placement.file_to_nodes.len() as u64;
    placement
        .outputs_of(k)
        .iter()
        .flat_map(|&q| {
            (1..=n_files)
                .filter(move |&n| !placement.stores(k, n))
                .map(move |n| (q, n))
        })
        .collect()
}
