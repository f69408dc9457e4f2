//! Exact computation in reduced free groups with torsion generators.
//!
//! Group words ([`words`]) are brought to a canonical ordered-product form
//! by commutator collection ([`collect`]). On top of that sit builders for
//! product identities ([`identities`]), permutation counting ([`perm`]) and
//! subgroup membership by sifting ([`subgroups`]).

pub mod collect;
pub mod identities;
pub mod perm;
pub mod subgroups;
pub mod words;

pub use collect::{BasisCommutator, CoeffMode, CollectError, Exponent, GroupContext, NormalForm};
pub use words::{parse, print, Expr, GenIndex};
