//! Compiles and runs every Rust snippet of the guide in `book/src` as a
//! doc-test, so the guide cannot drift from the library.

macro_rules! chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub mod $name {}
        )*
    };
}

chapters! {
    introduction => "introduction.md",
    features => "features.md",
    temporal_linking => "temporal-linking.md",
    affinities => "affinities.md",
    clustering => "clustering.md",
    trajectories => "trajectories.md",
    evaluation => "evaluation.md",
    synthetic_scenes => "synthetic-scenes.md",
    configuration => "configuration.md",
}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
