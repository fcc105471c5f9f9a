pub mod adequacy;
pub mod bootstrap;
pub mod case_study;
pub mod diurnal;
pub mod fit;
pub mod preprocess;
pub mod regress;
pub mod select_k;
pub mod simulate;
