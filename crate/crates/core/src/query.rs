//! Natural-join queries and join-tree construction for alpha-acyclic
//! queries via GYO ear removal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::schema::{AttributeRole, Relation};

/// One clustering dimension: an attribute owned by a specific relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureRef {
    pub relation: String,
    pub attribute: String,
}

impl FeatureRef {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>) -> Self {
        FeatureRef {
            relation: relation.into(),
            attribute: attribute.into(),
        }
    }
}

/// A natural-join query: relations joined on shared attribute names, plus
/// the ordered list of feature columns that form the clustering dimensions.
#[derive(Clone, Debug)]
pub struct JoinQuery {
    pub relations: Vec<String>,
    pub features: Vec<FeatureRef>,
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("query lists relation `{0}` more than once")]
    DuplicateRelation(String),
    #[error("query references unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("feature `{relation}.{attribute}` does not exist")]
    UnknownFeature { relation: String, attribute: String },
    #[error("feature attribute `{0}` is declared more than once")]
    DuplicateFeature(String),
    #[error(
        "attribute `{attribute}` is shared across relations; declare it with role \
         feature_and_join_key in `{relation}` to use it as a feature"
    )]
    SharedFeatureNotDeclared { relation: String, attribute: String },
    #[error("query declares no features")]
    NoFeatures,
    #[error("query is not alpha-acyclic: GYO reduction got stuck with relations {remaining:?}")]
    CyclicQuery { remaining: Vec<String> },
}

/// A rooted join tree over the query relations. Edges are labeled with the
/// shared attributes that drive the join between a node and its parent.
///
/// Node indices follow the order of [`JoinQuery::relations`].
#[derive(Clone, Debug)]
pub struct JoinTree {
    nodes: Vec<Relation>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    parent_join_attrs: Vec<Vec<String>>,
    root: usize,
}

impl JoinTree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn relation(&self, node: usize) -> &Relation {
        &self.nodes[node]
    }

    pub fn relations(&self) -> &[Relation] {
        &self.nodes
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Attributes shared with the parent; empty for the root.
    pub fn parent_join_attrs(&self, node: usize) -> &[String] {
        &self.parent_join_attrs[node]
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|r| r.name() == name)
    }

    /// Nodes in post-order (children before parents), ending at the root.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = alloc::vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
            } else {
                stack.push((node, true));
                for &c in self.children[node].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        order
    }

    /// Replaces every node's relation, keeping the tree structure. The new
    /// relations must be indexed identically.
    pub(crate) fn with_relations(&self, nodes: Vec<Relation>) -> JoinTree {
        debug_assert_eq!(nodes.len(), self.nodes.len());
        JoinTree {
            nodes,
            parent: self.parent.clone(),
            children: self.children.clone(),
            parent_join_attrs: self.parent_join_attrs.clone(),
            root: self.root,
        }
    }

    /// Checks the running-intersection property: for every attribute, the
    /// nodes containing it induce a connected subtree.
    pub fn running_intersection_holds(&self) -> bool {
        let mut attrs = BTreeSet::new();
        for rel in &self.nodes {
            for a in rel.attributes() {
                attrs.insert(a.name.clone());
            }
        }
        for attr in attrs {
            let members: BTreeSet<usize> = (0..self.nodes.len())
                .filter(|&i| self.nodes[i].attribute_index(&attr).is_some())
                .collect();
            if members.len() <= 1 {
                continue;
            }
            // BFS within the member-induced subgraph of the tree.
            let start = *members.iter().next().unwrap();
            let mut seen = BTreeSet::new();
            seen.insert(start);
            let mut frontier = alloc::vec![start];
            while let Some(v) = frontier.pop() {
                let mut neighbors: Vec<usize> = self.children[v].clone();
                if let Some(p) = self.parent[v] {
                    neighbors.push(p);
                }
                for n in neighbors {
                    if members.contains(&n) && seen.insert(n) {
                        frontier.push(n);
                    }
                }
            }
            if seen.len() != members.len() {
                return false;
            }
        }
        true
    }
}

/// Validates the query against the loaded relations and builds a join tree
/// by GYO ear removal, or rejects the query as cyclic.
///
/// Deterministic: among eligible ears (and witnesses) the lexicographically
/// smallest relation name is chosen.
pub fn build_join_tree(
    query: &JoinQuery,
    relations: Vec<Relation>,
) -> Result<JoinTree, QueryError> {
    validate_query(query, &relations)?;

    // Order nodes by their position in the query.
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, r) in relations.iter().enumerate() {
        by_name.insert(r.name(), i);
    }
    let order: Vec<usize> = query
        .relations
        .iter()
        .map(|n| {
            by_name
                .get(n.as_str())
                .copied()
                .ok_or_else(|| QueryError::UnknownRelation(n.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut nodes: Vec<Option<Relation>> = relations.into_iter().map(Some).collect();
    let nodes: Vec<Relation> = order
        .iter()
        .map(|&i| nodes[i].take().expect("relation used once"))
        .collect();

    let n = nodes.len();
    let attr_sets: Vec<BTreeSet<String>> = nodes
        .iter()
        .map(|r| r.attributes().iter().map(|a| a.name.clone()).collect())
        .collect();

    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut parent: Vec<Option<usize>> = alloc::vec![None; n];
    let mut parent_join_attrs: Vec<Vec<String>> = alloc::vec![Vec::new(); n];

    while remaining.len() > 1 {
        // An ear is a relation whose attributes shared with any *other*
        // remaining relation are all covered by a single witness relation.
        let mut ear: Option<(usize, usize)> = None;
        let mut candidates: Vec<usize> = remaining.iter().copied().collect();
        candidates.sort_by(|&a, &b| nodes[a].name().cmp(nodes[b].name()));
        'search: for &e in &candidates {
            let shared: BTreeSet<&String> = attr_sets[e]
                .iter()
                .filter(|a| {
                    remaining
                        .iter()
                        .any(|&o| o != e && attr_sets[o].contains(a.as_str()))
                })
                .collect();
            for &w in &candidates {
                if w == e {
                    continue;
                }
                if shared.iter().all(|a| attr_sets[w].contains(a.as_str())) {
                    ear = Some((e, w));
                    break 'search;
                }
            }
        }
        let Some((e, w)) = ear else {
            let remaining_names = remaining
                .iter()
                .map(|&i| String::from(nodes[i].name()))
                .collect();
            return Err(QueryError::CyclicQuery {
                remaining: remaining_names,
            });
        };
        parent[e] = Some(w);
        parent_join_attrs[e] = attr_sets[e].intersection(&attr_sets[w]).cloned().collect();
        remaining.remove(&e);
    }

    let root = remaining.into_iter().next().expect("at least one relation");
    let mut children: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }

    let tree = JoinTree {
        nodes,
        parent,
        children,
        parent_join_attrs,
        root,
    };
    debug_assert!(tree.running_intersection_holds());
    Ok(tree)
}

fn validate_query(query: &JoinQuery, relations: &[Relation]) -> Result<(), QueryError> {
    let mut seen = BTreeSet::new();
    for name in &query.relations {
        if !seen.insert(name.as_str()) {
            return Err(QueryError::DuplicateRelation(name.clone()));
        }
        if !relations.iter().any(|r| r.name() == name.as_str()) {
            return Err(QueryError::UnknownRelation(name.clone()));
        }
    }
    if query.features.is_empty() {
        return Err(QueryError::NoFeatures);
    }

    let mut feature_names = BTreeSet::new();
    for f in &query.features {
        if !feature_names.insert(f.attribute.as_str()) {
            return Err(QueryError::DuplicateFeature(f.attribute.clone()));
        }
        let rel = relations
            .iter()
            .find(|r| r.name() == f.relation.as_str())
            .ok_or_else(|| QueryError::UnknownRelation(f.relation.clone()))?;
        let Some(idx) = rel.attribute_index(&f.attribute) else {
            return Err(QueryError::UnknownFeature {
                relation: f.relation.clone(),
                attribute: f.attribute.clone(),
            });
        };
        let occurrences = query
            .relations
            .iter()
            .filter_map(|n| relations.iter().find(|r| r.name() == n.as_str()))
            .filter(|r| r.attribute_index(&f.attribute).is_some())
            .count();
        let role = rel.attributes()[idx].role;
        if occurrences > 1 && role != AttributeRole::FeatureAndJoinKey {
            return Err(QueryError::SharedFeatureNotDeclared {
                relation: f.relation.clone(),
                attribute: f.attribute.clone(),
            });
        }
    }
    Ok(())
}
