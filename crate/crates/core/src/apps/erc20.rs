use super::{policy, App, EvalCtx, Value};

fn base(name: &'static str, param: &str, min_parties: usize, transition: super::TransitionFn) -> App {
    App {
        name,
        namespace: "erc20",
        policy: policy(name, &[param], &["balance"], &["ok"], min_parties),
        transition,
        default_state: Value::record([("balance", Value::Uint(0))]),
    }
}

pub fn transfer(min_parties: usize) -> App {
    base("erc20_transfer", "transfer", min_parties, transfer_fn)
}

pub fn approved_transfer(min_parties: usize) -> App {
    base("erc20_approved_transfer", "approval", min_parties, approved_fn)
}

pub fn batch_transfer(min_parties: usize) -> App {
    base("erc20_batch_transfer", "batch", min_parties, batch_fn)
}

/// Move `amount` from party `from` to the party whose address is `to`. Self-transfers are
/// no-ops; unknown recipients and insufficient funds fail without effect.
fn move_funds(ctx: &mut EvalCtx<'_>, from: usize, to: &Value, amount: u64) -> bool {
    let Some(j) = to.as_address().and_then(|a| ctx.index_of(a)) else {
        return false;
    };
    if j == from {
        return true;
    }
    let have = ctx.uint_state(from, "balance");
    if have < amount {
        return false;
    }
    let Some(credited) = ctx.uint_state(j, "balance").checked_add(amount) else {
        return false;
    };
    ctx.set_state(from, "balance", Value::Uint(have - amount));
    ctx.set_state(j, "balance", Value::Uint(credited));
    true
}

fn field_uint(v: &Value, name: &str) -> Option<u64> {
    v.field(name).and_then(Value::as_uint)
}

/// `transfer = {to, amount}` per sender, applied in party order.
fn transfer_fn(ctx: &mut EvalCtx<'_>) {
    for i in 0..ctx.n() {
        let t = ctx.param(i, "transfer").clone();
        let ok = match (t.field("to"), field_uint(&t, "amount")) {
            (Some(to), Some(amount)) => move_funds(ctx, i, to, amount),
            _ => true,
        };
        ctx.set_return(i, "ok", Value::Bool(ok));
    }
}

/// Owners publish `{spender, allowance}`; spenders pull with `{from, amount}`. Pulls run in
/// party order and consume allowance.
fn approved_fn(ctx: &mut EvalCtx<'_>) {
    let n = ctx.n();
    let mut allowance = vec![vec![0u64; n]; n];
    for i in 0..n {
        let a = ctx.param(i, "approval");
        if let (Some(s), Some(amount)) = (a.field("spender"), field_uint(a, "allowance")) {
            if let Some(j) = s.as_address().and_then(|s| ctx.index_of(s)) {
                allowance[i][j] = amount;
            }
        }
    }
    for j in 0..n {
        let a = ctx.param(j, "approval").clone();
        let ok = match (a.field("from"), field_uint(&a, "amount")) {
            (Some(from), Some(amount)) => match from.as_address().and_then(|f| ctx.index_of(f)) {
                Some(i) if allowance[i][j] >= amount => {
                    let me = Value::Address(ctx.party(j).clone());
                    let moved = move_funds(ctx, i, &me, amount);
                    if moved {
                        allowance[i][j] -= amount;
                    }
                    moved
                }
                _ => false,
            },
            _ => true,
        };
        ctx.set_return(j, "ok", Value::Bool(ok));
    }
}

/// `batch = [{to, amount}, ..]` per sender; each leg is applied or skipped on its own and
/// `ok` reports whether every leg went through.
fn batch_fn(ctx: &mut EvalCtx<'_>) {
    for i in 0..ctx.n() {
        let legs = ctx.param(i, "batch").as_list().map(<[Value]>::to_vec).unwrap_or_default();
        let mut all = true;
        for leg in &legs {
            all &= match (leg.field("to"), field_uint(leg, "amount")) {
                (Some(to), Some(amount)) => move_funds(ctx, i, to, amount),
                _ => false,
            };
        }
        ctx.set_return(i, "ok", Value::Bool(all));
    }
}
