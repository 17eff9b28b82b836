//! Full-pool retrieval evaluation with MAP and nDCG@10.
//!
//! Every query ranks the entire split pool by dot product (self excluded,
//! ties by ascending position) and is scored against binary relevance sets
//! built from the DC, CC and BC pairs of that split.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::relations::RelationPairSet;
use crate::split::{Split, SplitAssignment};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    Citation,
    CoCitation,
    BibCoupling,
    Custom(String),
}

impl TaskName {
    pub fn short(&self) -> &str {
        match self {
            TaskName::Citation => "DC",
            TaskName::CoCitation => "CC",
            TaskName::BibCoupling => "BC",
            TaskName::Custom(s) => s,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskName::Citation => f.write_str("citation"),
            TaskName::CoCitation => f.write_str("co-citation"),
            TaskName::BibCoupling => f.write_str("bib-coupling"),
            TaskName::Custom(s) => f.write_str(s),
        }
    }
}

/// Queries and their relevant items, as positions in the evaluation pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTask {
    pub name: TaskName,
    pub relevance: BTreeMap<u32, Vec<u32>>,
}

impl EvalTask {
    pub fn num_queries(&self) -> usize {
        self.relevance.len()
    }
}

/// Paper ordinals of a split, in ascending order; position `i` in the pool
/// is row `i` of the pool's embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPool {
    pub members: Vec<u32>,
}

impl EvalPool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Embedding rows of the pool members, taken from a corpus-wide matrix.
    pub fn gather(&self, corpus_matrix: &Matrix) -> Matrix {
        corpus_matrix.select_rows(&self.members)
    }
}

fn task_from_pairs(
    name: TaskName,
    pairs: &RelationPairSet,
    position: &dyn Fn(u32) -> Option<u32>,
    directed: bool,
) -> EvalTask {
    let mut rel: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for p in &pairs.pairs {
        let (Some(a), Some(b)) = (position(p.a), position(p.b)) else {
            continue;
        };
        if a == b {
            continue;
        }
        rel.entry(a).or_default().push(b);
        if !directed {
            rel.entry(b).or_default().push(a);
        }
    }
    for v in rel.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    EvalTask { name, relevance: rel }
}

/// Citation task (forward direction only), co-citation and
/// bibliographic-coupling tasks over the pool of `split`.
pub fn build_tasks(
    dc: &RelationPairSet,
    cc: &RelationPairSet,
    bc: &RelationPairSet,
    assignment: &SplitAssignment,
    split: Split,
) -> (EvalPool, Vec<EvalTask>) {
    let members = assignment.members(split);
    let mut pos = vec![u32::MAX; assignment.len()];
    for (i, &m) in members.iter().enumerate() {
        pos[m as usize] = i as u32;
    }
    let position = |o: u32| pos.get(o as usize).copied().filter(|&p| p != u32::MAX);
    let tasks = vec![
        task_from_pairs(TaskName::Citation, dc, &position, dc.directed),
        task_from_pairs(TaskName::CoCitation, cc, &position, false),
        task_from_pairs(TaskName::BibCoupling, bc, &position, false),
    ];
    (EvalPool { members }, tasks)
}

/// Every other pool row by descending dot product with `query`; ties by
/// ascending row.
pub fn rank_pool(embeddings: &Matrix, query: u32) -> Vec<u32> {
    matrix::top_k_by_dot(embeddings, query as usize, embeddings.rows())
        .into_iter()
        .map(|x| x.0)
        .collect()
}

fn check_relevant(relevant: &HashSet<u32>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::invalid("relevant set is empty; such queries must be dropped"));
    }
    Ok(())
}

pub fn average_precision(ranking: &[u32], relevant: &HashSet<u32>) -> Result<f64> {
    check_relevant(relevant)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Binary-gain nDCG truncated at rank 10.
pub fn ndcg_at_10(ranking: &[u32], relevant: &HashSet<u32>) -> Result<f64> {
    check_relevant(relevant)?;
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(10)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(i, _)| gain(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(10)).map(gain).sum();
    Ok(dcg / ideal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub task: TaskName,
    pub map: f64,
    pub ndcg_at_10: f64,
    pub queries: usize,
    /// `(pool position, AP)` per query, ascending by position.
    pub per_query_ap: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub split: String,
    pub seed: u64,
    pub checkpoint: String,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskScores>,
    pub average_map: f64,
    pub average_ndcg_at_10: f64,
    pub metadata: RunMetadata,
}

pub fn evaluate(embeddings: &Matrix, tasks: &[EvalTask], metadata: RunMetadata) -> Result<EvalReport> {
    if tasks.is_empty() {
        return Err(Error::invalid("evaluation needs at least one task"));
    }
    let mut scores = Vec::with_capacity(tasks.len());
    for task in tasks {
        if let Some((&q, _)) = task
            .relevance
            .iter()
            .find(|(&q, rel)| q as usize >= embeddings.rows() || rel.iter().any(|&r| r as usize >= embeddings.rows()))
        {
            return Err(Error::invalid(format!(
                "task {} query {q} references rows outside the {}-row pool",
                task.name,
                embeddings.rows()
            )));
        }
        let per_query: Vec<(u32, f64, f64)> = task
            .relevance
            .par_iter()
            .map(|(&q, rel)| {
                let ranking = rank_pool(embeddings, q);
                let rel: HashSet<u32> = rel.iter().copied().filter(|&r| r != q).collect();
                let ap = average_precision(&ranking, &rel)?;
                let nd = ndcg_at_10(&ranking, &rel)?;
                Ok((q, ap, nd))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = per_query.len();
        let (map, nd) = if n == 0 {
            (0.0, 0.0)
        } else {
            (
                per_query.iter().map(|x| x.1).sum::<f64>() / n as f64,
                per_query.iter().map(|x| x.2).sum::<f64>() / n as f64,
            )
        };
        scores.push(TaskScores {
            task: task.name.clone(),
            map,
            ndcg_at_10: nd,
            queries: n,
            per_query_ap: per_query.iter().map(|x| (x.0, x.1)).collect(),
        });
    }
    Ok(EvalReport::from_scores(scores, metadata))
}

impl EvalReport {
    fn from_scores(tasks: Vec<TaskScores>, metadata: RunMetadata) -> Self {
        let k = tasks.len() as f64;
        let average_map = tasks.iter().map(|t| t.map).sum::<f64>() / k;
        let average_ndcg_at_10 = tasks.iter().map(|t| t.ndcg_at_10).sum::<f64>() / k;
        EvalReport {
            tasks,
            average_map,
            average_ndcg_at_10,
            metadata,
        }
    }

    pub fn task(&self, name: &TaskName) -> Option<&TaskScores> {
        self.tasks.iter().find(|t| &t.task == name)
    }

    /// Mean of several runs of the same evaluation (e.g. different seeds).
    pub fn aggregate(runs: &[EvalReport]) -> Result<EvalReport> {
        let first = runs
            .first()
            .ok_or_else(|| Error::invalid("cannot aggregate zero runs"))?;
        let r = runs.len() as f64;
        let mut tasks = Vec::with_capacity(first.tasks.len());
        for (ti, t) in first.tasks.iter().enumerate() {
            let mut per_query: Vec<(u32, f64)> = t.per_query_ap.iter().map(|x| (x.0, 0.0)).collect();
            let (mut map, mut nd) = (0.0, 0.0);
            for run in runs {
                let other = run
                    .tasks
                    .get(ti)
                    .filter(|o| o.task == t.task && o.per_query_ap.len() == per_query.len())
                    .ok_or_else(|| Error::invalid("runs being aggregated have different tasks or queries"))?;
                map += other.map;
                nd += other.ndcg_at_10;
                for (acc, x) in per_query.iter_mut().zip(&other.per_query_ap) {
                    acc.1 += x.1;
                }
            }
            per_query.iter_mut().for_each(|x| x.1 /= r);
            tasks.push(TaskScores {
                task: t.task.clone(),
                map: map / r,
                ndcg_at_10: nd / r,
                queries: t.queries,
                per_query_ap: per_query,
            });
        }
        let mut meta = first.metadata.clone();
        meta.runs = runs.iter().map(|x| x.metadata.runs.max(1)).sum();
        Ok(EvalReport::from_scores(tasks, meta))
    }

    /// Column header matching [`EvalReport::table_row`].
    pub fn table_header(&self) -> String {
        let mut s = format!("{:<28}", "model");
        for t in &self.tasks {
            let _ = write!(s, " | {:>7} {:>7}", format!("{} MAP", t.task.short()), "nDCG");
        }
        s.push_str(&format!(" | {:>7} {:>7}", "Avg MAP", "nDCG"));
        s
    }

    /// One row with scores in percent.
    pub fn table_row(&self) -> String {
        let label = if self.metadata.split.is_empty() {
            self.metadata.label.clone()
        } else {
            format!("{} [{}]", self.metadata.label, self.metadata.split)
        };
        let mut s = format!("{label:<28}");
        for t in &self.tasks {
            let _ = write!(s, " | {:>7.2} {:>7.2}", 100.0 * t.map, 100.0 * t.ndcg_at_10);
        }
        let _ = write!(
            s,
            " | {:>7.2} {:>7.2}",
            100.0 * self.average_map,
            100.0 * self.average_ndcg_at_10
        );
        s
    }

    /// JSON lines: one per task, then one with the averages.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            let line = serde_json::json!({
                "label": self.metadata.label,
                "split": self.metadata.split,
                "seed": self.metadata.seed,
                "checkpoint": self.metadata.checkpoint,
                "task": t.task.to_string(),
                "map": t.map,
                "ndcg_at_10": t.ndcg_at_10,
                "queries": t.queries,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let avg = serde_json::json!({
            "label": self.metadata.label,
            "split": self.metadata.split,
            "seed": self.metadata.seed,
            "checkpoint": self.metadata.checkpoint,
            "task": "average",
            "map": self.average_map,
            "ndcg_at_10": self.average_ndcg_at_10,
        });
        out.push_str(&avg.to_string());
        out.push('\n');
        out
    }
}

/// Renders several reports as one table.
pub fn format_table(reports: &[EvalReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut s = first.table_header();
    s.push('\n');
    s.push_str(&"-".repeat(s.len() - 1));
    s.push('\n');
    for r in reports {
        s.push_str(&r.table_row());
        s.push('\n');
    }
    s
}
