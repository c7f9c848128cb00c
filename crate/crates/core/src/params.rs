//! Named parameter storage shared by every architecture.

use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::ValueGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: ValueGrid,
    pub trainable: bool,
}

/// Index of a [`Param`] inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered list of named parameter arrays. The order is fixed at
/// construction and is the order used by checkpoints and the optimizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: ValueGrid, trainable: bool) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform `[-bound, bound)` initialization, drawn row-major.
    pub fn push_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut Rng,
    ) -> ParamId {
        let value = ValueGrid::from_fn(rows, cols, |_, _| rng.symmetric(bound));
        self.push(name, value, true)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn as_slice(&self) -> &[Param] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of scalars that receive gradient updates.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Registers every array on `tape`: trainable ones as parameters, the
    /// rest as constants.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let nodes = self
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        BoundParams { nodes }
    }

    /// First parameter whose values are not all finite.
    pub fn first_non_finite(&self) -> Option<&Param> {
        self.params.iter().find(|p| !p.value.is_finite())
    }
}

/// Tape nodes of a bound [`ParamStore`], in store order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    nodes: Vec<NodeId>,
}

impl BoundParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
}
