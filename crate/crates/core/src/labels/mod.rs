//! Land-cover class registries, recoding onto the 8-class General scheme,
//! class distributions and crosswalks between two fine schemes.

mod ops;
mod scheme;

pub use ops::{class_distribution, crosswalk, recode, ClassDistribution, CrosswalkMatrix};
pub use scheme::{
    builtin_schemes, recoding_table_rows, BuiltinSchemes, ClassEntry, LabelScheme, RecodeMap,
    UnknownPolicy, CORINE, GENERAL, NALCMS,
};
