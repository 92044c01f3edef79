//! The evaluation function: open the parties' states, run `F_P`, and commit to
//! the new states, returns and inputs under fresh one-time keys.

use std::collections::BTreeMap;

use crate::apps::{App, Value};
use crate::contract::commitments_digest;
use crate::crypto::{
    commit_private, derive_shared, hash_bytes, open_commitment, Address, Commitment, CryptoError,
    Encoder, KeyGenerator, PublicKey, SecretKey, SymmetricKey,
};
use crate::protocol::{Proof, ProofAux};

use super::messages::input_commitment;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("argument lengths disagree")]
    Arity,
    #[error("state commitment of party {0} does not open")]
    BadStateCommitment(usize),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Everything `eval` produces. Plaintexts and keys live only inside the enclave.
#[derive(Clone)]
pub struct EvalOutput {
    pub new_states: Vec<Value>,
    pub state_keys: Vec<SymmetricKey>,
    pub returns: Vec<Value>,
    pub return_keys: Vec<SymmetricKey>,
    /// `c_s'` with key slots, in party order.
    pub c_new_states: Vec<Commitment>,
    pub c_returns: Vec<Commitment>,
    pub c_params: Vec<Commitment>,
    pub proof: Proof,
    pub aux: ProofAux,
}

impl std::fmt::Debug for EvalOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvalOutput").field("proof", &self.proof).finish_non_exhaustive()
    }
}

/// Digest of the parties' current commitments in party order; absent entries count.
pub fn parties_cs_digest(parties: &[Address], array: &[Commitment]) -> crate::crypto::Digest {
    let mut enc = Encoder::new();
    enc.put_str("decloak/parties-cs");
    for p in parties {
        enc.put_option(array.iter().find(|c| &c.owner == p));
    }
    hash_bytes(&enc.finish())
}

/// Runs `F_P` for `parties` (with public keys `pks`) over the namespace commitment
/// array `array`, using inputs `x` pledged under one-time keys `k_x`.
#[allow(clippy::too_many_arguments)]
pub fn eval(
    app: &App,
    parties: &[Address],
    pks: &[PublicKey],
    x: &[Value],
    k_x: &[SymmetricKey],
    array: &[Commitment],
    network_sk: &SecretKey,
    keygen: &mut KeyGenerator,
) -> Result<EvalOutput, EvalError> {
    let n = parties.len();
    if pks.len() != n || x.len() != n || k_x.len() != n {
        return Err(EvalError::Arity);
    }
    let shared: Vec<SymmetricKey> =
        pks.iter().map(|pk| derive_shared(network_sk, pk)).collect::<Result<_, _>>()?;

    let mut states = Vec::with_capacity(n);
    for (i, (party, pk)) in parties.iter().zip(pks).enumerate() {
        let s = match array.iter().find(|c| &c.owner == party) {
            None => app.default_state.clone(),
            Some(c) => open_commitment(network_sk, pk, c)
                .ok()
                .and_then(|bytes| Value::from_bytes(&bytes))
                .ok_or(EvalError::BadStateCommitment(i))?,
        };
        states.push(s);
    }

    let ev = app.evaluate(parties, &states, x);
    let state_keys: Vec<SymmetricKey> = (0..n).map(|_| keygen.next_key()).collect();
    let return_keys: Vec<SymmetricKey> = (0..n).map(|_| keygen.next_key()).collect();

    let commit_all = |values: &[Value], keys: &[SymmetricKey]| -> Vec<Commitment> {
        (0..n).map(|i| commit_private(&values[i].to_bytes(), &keys[i], &shared[i], &parties[i])).collect()
    };
    let c_new_states = commit_all(&ev.new_states, &state_keys);
    let c_returns = commit_all(&ev.returns, &return_keys);
    let c_params = (0..n).map(|i| input_commitment(&x[i], &k_x[i], &shared[i], &parties[i])).collect();

    let mut next: BTreeMap<Address, Commitment> =
        array.iter().map(|c| (c.owner.clone(), c.clone())).collect();
    for c in &c_new_states {
        next.insert(c.owner.clone(), c.clone());
    }
    let next: Vec<Commitment> = next.into_values().collect();
    let proof = Proof { old_digest: commitments_digest(array), new_digest: commitments_digest(&next) };
    let aux = ProofAux {
        p_hash: app.p_hash(),
        f_hash: app.f_hash(),
        parties_cs_digest: parties_cs_digest(parties, array),
    };

    Ok(EvalOutput {
        new_states: ev.new_states,
        state_keys,
        returns: ev.returns,
        return_keys,
        c_new_states,
        c_returns,
        c_params,
        proof,
        aux,
    })
}
