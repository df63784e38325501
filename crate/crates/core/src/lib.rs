//! Age-of-information-aware status updates over an interfering V2V network.

pub mod baselines;
pub mod check;
pub mod env;
pub mod error;
pub mod harness;
pub mod mappo;
pub mod nn;
pub mod queue;
pub mod topology;
pub mod sage;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/queue.md")]
    mod queue {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/checks.md")]
    mod checks {}
}
