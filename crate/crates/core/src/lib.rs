pub mod backend;
pub mod dependency;
pub mod engine;
pub mod error;
pub mod ontology;
pub mod profile;
pub mod registry;
pub mod report;
pub mod service;
pub mod taxonomy;
