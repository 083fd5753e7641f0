//! Typed heterogeneous graphs, dataset IO, private-type Laplacians and the
//! synthetic shifted-pair generator.

mod graph;
mod io;
mod laplacian;
mod synthetic;

pub use graph::{
    parse_relation_name, restrict_to_shared, Domain, DomainPair, HeteroGraph, Relation, TypeKind,
    TypePair, TypeSchema,
};
pub use io::{load_dataset, parse_schema_text, schema_to_text, write_dataset};
pub use laplacian::{build_private_laplacian, Laplacian, LaplacianBlock};
pub use synthetic::{generate_synthetic_pair, SyntheticConfig};
