//! Platform administration entries (channel E4): category whitelist, session
//! TTL mirror, audit notes.

use super::model::config_key;
use super::{arg_str, expect_args, Chaincode, ChaincodeError, TxContext};
use crate::codec::{Decoder, Encoder};
use crate::identity::Role;

pub struct Admin;

/// Config key holding the category whitelist (newline separated).
pub const CATEGORIES_KEY: &str = "categories";

pub fn put_config_args(key: &str, value: &[u8]) -> Vec<Vec<u8>> {
    vec![key.as_bytes().to_vec(), value.to_vec()]
}

pub fn get_config_args(key: &str) -> Vec<Vec<u8>> {
    vec![key.as_bytes().to_vec()]
}

pub fn decode_config(response: &[u8]) -> Result<Option<Vec<u8>>, ChaincodeError> {
    let mut dec = Decoder::new(response);
    let v = match dec.u64()? {
        0 => None,
        1 => Some(dec.byte_vec()?),
        tag => return Err(ChaincodeError::Corrupt(format!("option tag {tag}"))),
    };
    dec.finish()?;
    Ok(v)
}

fn encode_option_bytes(v: Option<&[u8]>) -> Vec<u8> {
    let mut enc = Encoder::new();
    match v {
        None => enc.u64(0),
        Some(v) => enc.u64(1).bytes(v),
    };
    enc.finish()
}

impl Chaincode for Admin {
    fn name(&self) -> &'static str {
        "admin"
    }

    fn functions(&self) -> &'static [&'static str] {
        &["put_config", "get_config"]
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "put_config" => {
                expect_args(args, 2)?;
                if ctx.invoker().role != Role::Admin {
                    return Err(ChaincodeError::NotAdmin);
                }
                let key = arg_str(args, 0)?;
                if key.is_empty() {
                    return Err(ChaincodeError::InvalidArgument("empty config key".into()));
                }
                // The previous value is returned, so puts read the key too.
                let previous = ctx.get_state(&config_key(&key));
                ctx.put_state(&config_key(&key), args[1].clone());
                Ok(encode_option_bytes(previous.as_deref()))
            }
            "get_config" => {
                expect_args(args, 1)?;
                let key = arg_str(args, 0)?;
                let found = ctx.get_state(&config_key(&key));
                Ok(encode_option_bytes(found.as_deref()))
            }
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincode::testutil::{ident, run};
    use crate::chaincode::ChaincodeRegistry;
    use crate::endorsement::EndorsementPolicy;
    use crate::ledger::{ChannelId, Version, WorldState};

    fn cc() -> crate::chaincode::Installed {
        ChaincodeRegistry::platform(EndorsementPolicy::new(2))
            .for_channel(&ChannelId::admin())
            .unwrap()
            .clone()
    }

    #[test]
    fn admin_puts_category_whitelist() {
        let admin = ident("admin0", Role::Admin);
        let mut s = WorldState::new();
        let cats = b"nature\nsport\nhuman\nanimal";
        run(&mut s, &cc(), &admin, "put_config", put_config_args(CATEGORIES_KEY, cats), Version::new(1, 0)).unwrap();
        let r = run(&mut s, &cc(), &admin, "get_config", get_config_args(CATEGORIES_KEY), Version::new(2, 0)).unwrap();
        assert_eq!(decode_config(&r.response).unwrap().unwrap(), cats);
    }

    #[test]
    fn non_admin_put_rejected_and_absent_get() {
        let alice = ident("alice", Role::Photographer);
        let mut s = WorldState::new();
        assert_eq!(
            run(&mut s, &cc(), &alice, "put_config", put_config_args("x", b"y"), Version::new(1, 0)),
            Err(ChaincodeError::NotAdmin)
        );
        let r = run(&mut s, &cc(), &alice, "get_config", get_config_args("x"), Version::new(1, 0)).unwrap();
        assert_eq!(decode_config(&r.response).unwrap(), None);
    }
}
