use sha2::{Digest as _, Sha256};

use super::{policy, App, EvalCtx, Value};

pub fn random(min_parties: usize) -> App {
    App {
        name: "oracle_random",
        namespace: "oracle",
        policy: policy("oracle_random", &["share"], &[], &["random"], min_parties),
        transition,
        default_state: Value::empty_record(),
    }
}

/// SHA-256 over the concatenated byte shares in party order, as a 256-bit big-endian
/// integer. Non-byte shares contribute nothing.
fn transition(ctx: &mut EvalCtx<'_>) {
    let mut h = Sha256::new();
    for i in 0..ctx.n() {
        if let Some(b) = ctx.param(i, "share").as_bytes() {
            h.update(b);
        }
    }
    let out = Value::Bytes(h.finalize().to_vec());
    for i in 0..ctx.n() {
        ctx.set_return(i, "random", out.clone());
    }
}
