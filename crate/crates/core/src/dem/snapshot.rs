//! JSONL snapshots: domain header records first, then one record per element.
//! Parents are not written; they are rebuilt from children on load.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DemError, DemStore, ElementId, Props};

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("snapshot line {line}: {source}")]
    Store { line: usize, source: DemError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Domain {
        name: String,
        indexed: bool,
        dim: Option<usize>,
    },
    Element {
        id: ElementId,
        domain: String,
        weight: f64,
        props: Props,
        children: Vec<ElementId>,
        embedding: Option<Vec<f64>>,
    },
}

impl DemStore {
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in self.domains.values() {
            let rec = Record::Domain {
                name: d.name.clone(),
                indexed: d.indexed,
                dim: d.embedding_dim,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        for e in &self.elements {
            let rec = Record::Element {
                id: e.id,
                domain: e.domain.clone(),
                weight: e.weight,
                props: e.props.clone(),
                children: e.children.clone(),
                embedding: e.embedding.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads a snapshot. Element ids must appear densely in ascending order,
    /// which is what [`DemStore::export_jsonl`] writes. Rebuilt parent lists
    /// are in ascending id order.
    pub fn import_jsonl<R: BufRead>(input: R) -> Result<DemStore, SnapshotError> {
        let mut store = DemStore::new();
        let mut links: Vec<(usize, ElementId, Vec<ElementId>)> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| SnapshotError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            match rec {
                Record::Domain { name, indexed, dim } => {
                    store
                        .create_domain(&name, indexed, dim)
                        .map_err(|source| SnapshotError::Store { line: line_no, source })?;
                }
                Record::Element { id, domain, weight, props, children, embedding } => {
                    if id.get() != store.len() as u64 {
                        return Err(SnapshotError::Parse {
                            line: line_no,
                            message: format!("expected element id {}, found {id}", store.len()),
                        });
                    }
                    let new_id = store
                        .create_element(&domain, props, weight)
                        .map_err(|source| SnapshotError::Store { line: line_no, source })?;
                    if let Some(v) = embedding {
                        store
                            .set_embedding(new_id, v)
                            .map_err(|source| SnapshotError::Store { line: line_no, source })?;
                    }
                    links.push((line_no, new_id, children));
                }
            }
        }
        for (line, parent, children) in links {
            for child in children {
                store
                    .link(parent, child)
                    .map_err(|source| SnapshotError::Store { line, source })?;
            }
        }
        Ok(store)
    }
}
