use super::{policy, App, EvalCtx, Value};

pub fn app(min_parties: usize) -> App {
    App {
        name: "scores_mean",
        namespace: "scores",
        policy: policy("scores_mean", &["score"], &[], &["mean"], min_parties),
        transition,
        default_state: Value::empty_record(),
    }
}

/// Everyone learns the floor of the mean score; non-numeric scores count as zero.
fn transition(ctx: &mut EvalCtx<'_>) {
    let n = ctx.n();
    if n == 0 {
        return;
    }
    let sum: u128 = (0..n).map(|i| ctx.param(i, "score").as_uint().unwrap_or(0) as u128).sum();
    let mean = (sum / n as u128) as u64;
    for i in 0..n {
        ctx.set_return(i, "mean", Value::Uint(mean));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Address;

    fn run(scores: &[u64]) -> Vec<Value> {
        let parties: Vec<Address> =
            (0..scores.len()).map(|i| Address::from_bytes(vec![i as u8; 20])).collect();
        let params: Vec<Value> =
            scores.iter().map(|s| Value::record([("score", Value::Uint(*s))])).collect();
        let states = vec![Value::empty_record(); scores.len()];
        app(1).evaluate(&parties, &states, &params).returns
    }

    fn mean(v: &Value) -> u64 {
        v.field("mean").unwrap().as_uint().unwrap()
    }

    #[test]
    fn examples() {
        assert!(run(&[90, 80, 70]).iter().all(|r| mean(r) == 80));
        assert_eq!(mean(&run(&[42])[0]), 42);
        assert_eq!(mean(&run(&[1, 2])[0]), 1);
    }

    #[test]
    fn no_overflow() {
        assert_eq!(mean(&run(&[u64::MAX, u64::MAX])[0]), u64::MAX);
    }
}
