//! Pushes batches of invocations through the full pipeline.

use hyperpubsub_core::ledger::TxLocation;
use hyperpubsub_core::{ChannelId, Client, Hash256, Network, NetworkConfig, PipelineError, Role};

pub struct Call {
    pub client: Client,
    pub channel: ChannelId,
    pub function: &'static str,
    pub args: Vec<Vec<u8>>,
}

impl Call {
    pub fn new(client: &Client, channel: ChannelId, function: &'static str, args: Vec<Vec<u8>>) -> Self {
        Call {
            client: client.clone(),
            channel,
            function,
            args,
        }
    }
}

/// Outcome of one call: rejected before ordering, or where it landed.
pub type Outcome = Result<(Hash256, TxLocation), PipelineError>;

pub struct Driver {
    pub net: Network,
    pub admin: Client,
}

impl Driver {
    pub fn new(cfg: NetworkConfig) -> Result<Self, PipelineError> {
        let mut net = Network::new(cfg)?;
        if net.elect_leader(20_000).is_none() {
            return Err(PipelineError::Unavailable);
        }
        let admin = net.enroll("ops", Role::Admin, None)?;
        Ok(Driver { net, admin })
    }

    pub fn client(&mut self, name: &str, role: Role) -> Client {
        self.net.enroll(name, role, None).expect("fresh name")
    }

    /// Endorses every call against the current committed state, submits all
    /// of them, then steps until each one is committed at the anchor peer.
    /// Calls endorsed together may conflict with each other.
    pub fn batch(&mut self, calls: Vec<Call>) -> Vec<Outcome> {
        let mut out: Vec<Option<Outcome>> = Vec::with_capacity(calls.len());
        let mut pending = Vec::new();
        for (i, c) in calls.iter().enumerate() {
            match self.net.prepare(&c.client, &c.channel, c.function, c.args.clone()) {
                Ok(tx) => {
                    out.push(None);
                    pending.push((i, tx));
                }
                Err(e) => out.push(Some(Err(e))),
            }
        }
        for (i, tx) in &pending {
            if let Err(e) = self.net.submit_until_accepted(tx, self.net.config().commit_timeout) {
                out[*i] = Some(Err(e));
            }
        }
        let waiting: Vec<_> = pending.into_iter().filter(|(i, _)| out[*i].is_none()).collect();
        let timeout = self.net.config().commit_timeout;
        self.net.run_until(timeout, |n| {
            waiting.iter().all(|(_, tx)| n.tx_status(tx.channel(), &tx.tx_id).is_some())
        });
        for (i, tx) in waiting {
            let r = match self.net.tx_status(tx.channel(), &tx.tx_id) {
                Some(loc) => Ok(loc),
                None => self.net.await_commit(&tx),
            };
            out[i] = Some(r.map(|loc| (tx.tx_id, loc)));
        }
        out.into_iter().map(|o| o.expect("every call resolved")).collect()
    }

    pub fn one(&mut self, call: Call) -> Outcome {
        self.batch(vec![call]).pop().expect("one call")
    }
}
