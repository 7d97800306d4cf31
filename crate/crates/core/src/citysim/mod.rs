pub mod city;
pub mod experiment;
pub mod metrics;
pub mod route;
pub mod stats;
