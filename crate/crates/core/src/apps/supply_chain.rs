use super::{policy, App, EvalCtx, Value};

pub fn app(min_parties: usize) -> App {
    App {
        name: "supply_chain",
        namespace: "supply",
        policy: policy("supply_chain", &["bid"], &["balance"], &["won", "amount"], min_parties),
        transition,
        default_state: Value::record([("balance", Value::Uint(0))]),
    }
}

/// A numeric `bid` is a supplier's price; a `{buy = budget}` record marks the buyer.
/// The cheapest supplier wins (lowest index on ties). If the first buyer's budget and
/// balance cover the price, the price moves from buyer to winner.
fn transition(ctx: &mut EvalCtx<'_>) {
    let n = ctx.n();
    let mut winner: Option<(usize, u64)> = None;
    let mut buyer: Option<(usize, u64)> = None;
    for i in 0..n {
        match ctx.param(i, "bid") {
            Value::Uint(price) => {
                if winner.map_or(true, |(_, best)| *price < best) {
                    winner = Some((i, *price));
                }
            }
            other => {
                if let (None, Some(budget)) = (buyer, other.field("buy").and_then(Value::as_uint)) {
                    buyer = Some((i, budget));
                }
            }
        }
    }

    let mut paid = false;
    if let (Some((w, price)), Some((b, budget))) = (winner, buyer) {
        let buyer_balance = ctx.uint_state(b, "balance");
        if budget >= price && buyer_balance >= price {
            let winner_balance = ctx.uint_state(w, "balance");
            if let Some(credited) = winner_balance.checked_add(price) {
                ctx.set_state(b, "balance", Value::Uint(buyer_balance - price));
                ctx.set_state(w, "balance", Value::Uint(credited));
                paid = true;
            }
        }
    }

    for i in 0..n {
        let is_winner = winner.is_some_and(|(w, _)| w == i);
        let is_buyer = buyer.is_some_and(|(b, _)| b == i);
        let price = winner.map_or(0, |(_, p)| p);
        let (won, amount) = if is_winner {
            (true, if paid { price } else { 0 })
        } else if is_buyer {
            (paid, if paid { price } else { 0 })
        } else {
            (false, 0)
        };
        ctx.set_return(i, "won", Value::Bool(won));
        ctx.set_return(i, "amount", Value::Uint(amount));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Address;

    fn parties(n: usize) -> Vec<Address> {
        (0..n).map(|i| Address::from_bytes(vec![i as u8; 20])).collect()
    }

    fn bid(v: Value) -> Value {
        Value::record([("bid", v)])
    }

    fn balance(n: u64) -> Value {
        Value::record([("balance", Value::Uint(n))])
    }

    fn won(r: &Value) -> bool {
        r.field("won").unwrap().as_bool().unwrap()
    }

    #[test]
    fn lowest_bid_wins() {
        let x: Vec<Value> = [5, 3, 9].iter().map(|b| bid(Value::Uint(*b))).collect();
        let ev = app(1).evaluate(&parties(3), &[balance(0), balance(0), balance(0)], &x);
        let winners: Vec<bool> = ev.returns.iter().map(won).collect();
        assert_eq!(winners, vec![false, true, false]);
        assert!(ev.writes.is_empty(), "no buyer, no payment");
    }

    #[test]
    fn single_bidder_and_ties() {
        let ev = app(1).evaluate(&parties(1), &[balance(0)], &[bid(Value::Uint(7))]);
        assert!(won(&ev.returns[0]));
        let x: Vec<Value> = [4, 2, 2].iter().map(|b| bid(Value::Uint(*b))).collect();
        let ev = app(1).evaluate(&parties(3), &[balance(0), balance(0), balance(0)], &x);
        assert!(won(&ev.returns[1]) && !won(&ev.returns[2]));
    }

    #[test]
    fn buyer_pays_winner() {
        let x = vec![
            bid(Value::record([("buy", Value::Uint(10))])),
            bid(Value::Uint(6)),
            bid(Value::Uint(8)),
        ];
        let s = vec![balance(20), balance(1), balance(0)];
        let ev = app(1).evaluate(&parties(3), &s, &x);
        assert_eq!(ev.new_states, vec![balance(14), balance(7), balance(0)]);
        assert!(won(&ev.returns[0]) && won(&ev.returns[1]));
        assert_eq!(ev.returns[1].field("amount"), Some(&Value::Uint(6)));
    }

    #[test]
    fn buyer_without_funds_pays_nothing() {
        let x = vec![bid(Value::record([("buy", Value::Uint(10))])), bid(Value::Uint(6))];
        let s = vec![balance(5), balance(0)];
        let ev = app(1).evaluate(&parties(2), &s, &x);
        assert_eq!(ev.new_states, s);
        assert!(!won(&ev.returns[0]));
        assert_eq!(ev.returns[1].field("amount"), Some(&Value::Uint(0)));
    }
}
