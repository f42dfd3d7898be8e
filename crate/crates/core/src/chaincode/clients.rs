//! Client accounts (channel E1).

use std::collections::BTreeMap;

use super::model::Account;
use super::{arg_str, expect_args, Chaincode, ChaincodeError, TxContext};
use crate::codec::{Canonical, Decoder, Encoder};
use crate::identity::Role;

pub struct Clients;

pub fn create_account_args(name: &str, role: Role, profile: &BTreeMap<String, String>) -> Vec<Vec<u8>> {
    let mut enc = Encoder::new();
    enc.u64(profile.len() as u64);
    for (k, v) in profile {
        enc.str(k).str(v);
    }
    vec![name.as_bytes().to_vec(), role.as_str().as_bytes().to_vec(), enc.finish()]
}

pub fn get_account_args(name: &str) -> Vec<Vec<u8>> {
    vec![name.as_bytes().to_vec()]
}

/// Decodes the response of `get_account`.
pub fn decode_account(response: &[u8]) -> Result<Option<Account>, ChaincodeError> {
    let mut dec = Decoder::new(response);
    let acct = dec.option::<Account>()?;
    dec.finish()?;
    Ok(acct)
}

impl Chaincode for Clients {
    fn name(&self) -> &'static str {
        "clients"
    }

    fn functions(&self) -> &'static [&'static str] {
        &["create_account", "get_account"]
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "create_account" => {
                expect_args(args, 3)?;
                let name = arg_str(args, 0)?;
                if name.trim().is_empty() {
                    return Err(ChaincodeError::InvalidArgument("empty account name".into()));
                }
                let role: Role = arg_str(args, 1)?
                    .parse()
                    .map_err(|e: crate::identity::MspError| ChaincodeError::InvalidArgument(e.to_string()))?;
                let invoker = ctx.invoker();
                let own_record = invoker.name == name && invoker.role == role;
                if !own_record && invoker.role != Role::Admin {
                    return Err(ChaincodeError::NotOwner);
                }
                let mut dec = Decoder::new(&args[2]);
                let profile: Vec<(String, String)> = dec.list()?;
                dec.finish()?;
                let key = Account::key(&name);
                if ctx.get_state(&key).is_some() {
                    return Err(ChaincodeError::AccountExists(name));
                }
                let account = Account {
                    name,
                    role,
                    profile: profile.into_iter().collect(),
                    registered_at: ctx.timestamp(),
                };
                let bytes = account.to_canonical();
                ctx.put_state(&key, bytes.clone());
                Ok(bytes)
            }
            "get_account" => {
                expect_args(args, 1)?;
                let name = arg_str(args, 0)?;
                let found = ctx
                    .get_state(&Account::key(&name))
                    .map(|raw| Account::from_canonical(&raw))
                    .transpose()?;
                let mut enc = Encoder::new();
                enc.option(found.as_ref());
                Ok(enc.finish())
            }
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}
