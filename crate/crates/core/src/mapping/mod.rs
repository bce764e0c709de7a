//! Runtime-editable mappings from source signals to scene destinations.

mod expr;
mod table;

pub use expr::{parse_expression, BinOp, Expr, ExprError, Expression, Func, MAX_VARIABLES};
pub use table::{
    DestinationUpdate, MappingError, MappingRequest, MappingSpec, MappingTable, PreparedMapping,
};
