//! Command-line driver for the `ghostlab` library: closed-form sweeps,
//! Monte-Carlo agreement runs, speckle experiments and the acceptance
//! self-test.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod selftest;
pub mod table;

/// Worker-thread count: the flag wins, then `GHOSTLAB_THREADS`, then the
/// config value. 0 means one per core.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, config: usize) -> anyhow::Result<usize> {
    if let Some(k) = flag {
        return Ok(k);
    }
    if let Some(text) = env {
        return text
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("GHOSTLAB_THREADS must be a non-negative integer, got `{text}`"));
    }
    Ok(config)
}
