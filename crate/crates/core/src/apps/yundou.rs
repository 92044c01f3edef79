use super::{policy, App, EvalCtx, Value};

pub fn vote_transfer(min_parties: usize) -> App {
    App {
        name: "yundou_vote_transfer",
        namespace: "yundou",
        policy: policy("yundou_vote_transfer", &["motion"], &["balance"], &["executed"], min_parties),
        transition,
        default_state: Value::record([("balance", Value::Uint(0))]),
    }
}

/// Every manager submits `{vote}`; the lowest-indexed manager that also names
/// `request_to` and `amount` is the requester. The transfer from the requester runs iff a
/// strict majority of settled managers approve and the requester can pay.
fn transition(ctx: &mut EvalCtx<'_>) {
    let n = ctx.n();
    let approvals = (0..n)
        .filter(|&i| ctx.param(i, "motion").field("vote").and_then(Value::as_bool) == Some(true))
        .count();
    let request = (0..n).find_map(|i| {
        let m = ctx.param(i, "motion");
        let to = m.field("request_to")?.as_address()?;
        let amount = m.field("amount")?.as_uint()?;
        Some((i, ctx.index_of(to), amount))
    });

    let mut executed = false;
    if let Some((from, Some(to), amount)) = request {
        if approvals * 2 > n && from != to {
            let have = ctx.uint_state(from, "balance");
            if have >= amount {
                if let Some(credited) = ctx.uint_state(to, "balance").checked_add(amount) {
                    ctx.set_state(from, "balance", Value::Uint(have - amount));
                    ctx.set_state(to, "balance", Value::Uint(credited));
                    executed = true;
                }
            }
        }
    }
    for i in 0..n {
        ctx.set_return(i, "executed", Value::Bool(executed));
    }
}
