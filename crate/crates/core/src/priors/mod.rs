//! Untrained image-prior networks: the hourglass and the deep decoder.

mod code;
mod deep_decoder;
mod hourglass;
mod network;
mod params;
mod spec;

pub use code::{sample_input_code, InputCode, CODE_SCALE};
pub use network::{Bindings, ForwardMode, PriorNetwork};
pub use params::{Param, ParamSet};
pub use spec::{Architecture, NetworkSpec};

pub fn build_hourglass(spec: &NetworkSpec, seed: u64) -> crate::Result<PriorNetwork> {
    if spec.architecture != Architecture::Hourglass {
        return Err(crate::Error::InvalidArgument("spec is not an hourglass".into()));
    }
    PriorNetwork::build(spec, seed)
}

pub fn build_deep_decoder(k: usize, depth: usize, seed: u64) -> crate::Result<PriorNetwork> {
    if k == 0 {
        return Err(crate::Error::InvalidArgument("deep decoder width must be at least 1".into()));
    }
    PriorNetwork::build(&NetworkSpec::deep_decoder(k, depth), seed)
}
