use std::collections::VecDeque;
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::time::{Duration, Instant};

use log::{info, warn};

use super::governor::FrameRateGovernor;
use super::protocol::{
    encode, error_text, ClientMsg, FrameMetrics, FrameMsg, ProposalMsg, ServerMsg, SessionMode, StatusMsg,
    PROTOCOL_VERSION,
};
use super::server::{Clients, Inbound};
use super::{Fallback, LiveConfig};
use crate::envs::{Action, AnyEnv, Env};
use crate::harness::{Decision, HarnessError, InterventionSource, StepOutcome, TrainProgress};
use crate::oracle::{InterventionSourceKind, Oracle};

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    Act(Action),
    Release,
}

/// Intervention source fed by connected clients. Client messages are queued
/// in arrival order and each queued entry governs one environment step.
pub struct LiveSource {
    inbound: Receiver<Inbound>,
    clients: Clients,
    oracle: Option<Oracle>,
    fallback: Fallback,
    lockstep: bool,
    lockstep_timeout: Duration,
    governor: FrameRateGovernor,
    paused: bool,
    controller: Option<u64>,
    holding: bool,
    pending: VecDeque<Pending>,
    last_action: Option<Action>,
    repeated: bool,
    closed: bool,
}

impl LiveSource {
    pub fn new(cfg: &LiveConfig, inbound: Receiver<Inbound>, clients: Clients, oracle: Option<Oracle>) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Self {
            inbound,
            clients,
            oracle,
            fallback: cfg.fallback,
            lockstep: cfg.lockstep,
            lockstep_timeout: Duration::from_millis(cfg.lockstep_timeout_ms),
            governor: if cfg.lockstep { FrameRateGovernor::disabled() } else { FrameRateGovernor::new(cfg.hz)? },
            paused: false,
            controller: None,
            holding: false,
            pending: VecDeque::new(),
            last_action: None,
            repeated: false,
            closed: false,
        })
    }

    pub fn mode(&self) -> SessionMode {
        if self.paused {
            SessionMode::Paused
        } else if self.holding || self.controller.is_some() {
            SessionMode::Live
        } else {
            SessionMode::Oracle
        }
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Blocks until a client connects or `timeout` passes.
    pub fn wait_for_client(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.clients.count() == 0 {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            match self.inbound.recv_timeout(deadline - now) {
                Ok(ev) => self.handle(ev),
                Err(_) => return self.clients.count() > 0,
            }
        }
        true
    }

    fn status_for(&self, id: u64) -> String {
        encode(&ServerMsg::Status(StatusMsg {
            v: PROTOCOL_VERSION,
            mode: self.mode(),
            connected_clients: self.clients.count(),
            controlling: self.controller == Some(id),
        }))
    }

    fn publish_status(&self) {
        for id in self.clients.ids() {
            self.clients.send_to(id, self.status_for(id));
        }
    }

    fn handle(&mut self, ev: Inbound) {
        match ev {
            Inbound::Connected(id) => self.clients.send_to(id, self.status_for(id)),
            Inbound::Disconnected(id) => {
                if self.controller == Some(id) {
                    self.controller = None;
                    let was_in_control = self.holding || !self.pending.is_empty();
                    self.holding = false;
                    self.pending.clear();
                    if was_in_control && self.fallback == Fallback::Pause {
                        info!("controlling client left mid-takeover, pausing");
                        self.paused = true;
                    }
                }
                self.publish_status();
            }
            Inbound::Msg(id, msg) => match msg {
                ClientMsg::Intervene(m) => {
                    if let Some(owner) = self.controller.filter(|&o| o != id) {
                        self.clients.send_to(id, error_text(format!("control is held by client {owner}")));
                        return;
                    }
                    if m.active {
                        let newly = self.controller.is_none();
                        self.controller = Some(id);
                        match m.action {
                            Some(a) => self.pending.push_back(Pending::Act(a)),
                            None => self.holding = true,
                        }
                        if newly {
                            self.publish_status();
                        }
                    } else {
                        self.pending.push_back(Pending::Release);
                        self.controller = None;
                    }
                }
                ClientMsg::Pause(_) => {
                    self.paused = true;
                    self.publish_status();
                }
                ClientMsg::Resume(_) => {
                    if self.paused {
                        self.paused = false;
                        self.governor.restart();
                        self.publish_status();
                    }
                }
            },
        }
    }

    fn drain(&mut self) {
        loop {
            match self.inbound.try_recv() {
                Ok(ev) => self.handle(ev),
                Err(TryRecvError::Empty) => return,
                Err(TryRecvError::Disconnected) => {
                    self.closed = true;
                    return;
                }
            }
        }
    }

    fn wait_for_input(&mut self, timeout: Duration) {
        let deadline = Instant::now() + timeout;
        while self.pending.is_empty() && !self.paused && self.clients.count() > 0 {
            let now = Instant::now();
            if now >= deadline {
                warn!("no supervisor input within {timeout:?}, novice keeps control");
                return;
            }
            match self.inbound.recv_timeout(deadline - now) {
                Ok(ev) => self.handle(ev),
                Err(RecvTimeoutError::Timeout) => return,
                Err(RecvTimeoutError::Disconnected) => {
                    self.closed = true;
                    return;
                }
            }
        }
    }

    fn human(&mut self, action: Action) -> Decision {
        self.last_action = Some(action.clone());
        self.repeated = false;
        self.holding = true;
        Decision::Takeover {
            action,
            source: InterventionSourceKind::LiveHuman,
        }
    }
}

impl InterventionSource for LiveSource {
    fn decide(&mut self, step: u64, env: &AnyEnv, a_n: &Action) -> Result<Decision, HarnessError> {
        self.drain();
        if self.closed {
            return Ok(Decision::Stop);
        }
        if self.paused {
            if let Ok(ev) = self.inbound.recv_timeout(Duration::from_millis(20)) {
                self.handle(ev);
            }
            return Ok(Decision::Pause);
        }
        if self.clients.count() > 0 {
            self.governor.wait();
            self.drain();
        }
        if self.lockstep && self.clients.count() > 0 {
            let proposal = ServerMsg::Proposal(ProposalMsg {
                v: PROTOCOL_VERSION,
                step,
                env_render: env.snapshot(),
                agent_action: a_n.clone(),
            });
            self.clients.broadcast(&encode(&proposal));
            self.wait_for_input(self.lockstep_timeout);
            if self.paused {
                return Ok(Decision::Pause);
            }
        }
        match self.pending.pop_front() {
            Some(Pending::Act(a)) => {
                if env.action_space().contains(&a) {
                    return Ok(self.human(a));
                }
                if let Some(id) = self.controller {
                    self.clients.send_to(id, error_text(format!("action {a:?} is outside the action space")));
                }
            }
            Some(Pending::Release) => {
                self.holding = false;
                self.publish_status();
            }
            None if self.holding => {
                // a held takeover with no fresh action: repeat once, then pause
                match self.last_action.clone() {
                    Some(a) if !self.repeated => {
                        self.repeated = true;
                        return Ok(Decision::Takeover {
                            action: a,
                            source: InterventionSourceKind::LiveHuman,
                        });
                    }
                    _ => {
                        self.holding = false;
                        self.paused = true;
                        self.publish_status();
                        return Ok(Decision::Pause);
                    }
                }
            }
            None => {}
        }
        match self.oracle.as_mut() {
            Some(o) => o.decide(step, env, a_n),
            None => Ok(Decision::Novice),
        }
    }

    fn observe(&mut self, outcome: &StepOutcome, env: &AnyEnv, progress: &TrainProgress) {
        if self.clients.count() == 0 {
            return;
        }
        let frame = ServerMsg::Frame(FrameMsg {
            v: PROTOCOL_VERSION,
            step: progress.step,
            env_render: env.snapshot(),
            agent_action: outcome.a_n.clone(),
            applied_action: outcome.applied.clone(),
            intervened: outcome.intervened(),
            done: outcome.result.done,
            metrics: FrameMetrics {
                psi: progress.psi(),
                success_rate_latest: progress.success_rate_latest,
                human_data_usage: progress.human_data_usage,
            },
        });
        self.clients.broadcast(&encode(&frame));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GridConfig, GridWorld, FORWARD, TURN_LEFT, TURN_RIGHT};
    use std::sync::mpsc::{self, Sender};

    fn setup(cfg: LiveConfig) -> (LiveSource, Sender<Inbound>, mpsc::Receiver<String>, AnyEnv) {
        let (tx, rx) = mpsc::channel();
        let clients = Clients::default();
        let (out_tx, out_rx) = mpsc::channel();
        clients.add(1, out_tx);
        let src = LiveSource::new(&cfg, rx, clients, None).unwrap();
        let mut g = GridWorld::new(GridConfig::empty(6)).unwrap();
        g.reset(0);
        (src, tx, out_rx, AnyEnv::Grid(g))
    }

    fn fast() -> LiveConfig {
        LiveConfig {
            hz: 1000.0,
            ..LiveConfig::default()
        }
    }

    fn act(a: usize) -> Inbound {
        Inbound::Msg(1, ClientMsg::intervene(Some(Action::Discrete(a))))
    }

    #[test]
    fn message_before_selection_affects_that_step() {
        let (mut src, tx, _out, env) = setup(fast());
        let a_n = Action::Discrete(TURN_LEFT);
        assert_eq!(src.decide(0, &env, &a_n).unwrap(), Decision::Novice);
        tx.send(act(FORWARD)).unwrap();
        tx.send(act(TURN_RIGHT)).unwrap();
        let d1 = src.decide(1, &env, &a_n).unwrap();
        let d2 = src.decide(2, &env, &a_n).unwrap();
        let take = |a| Decision::Takeover {
            action: Action::Discrete(a),
            source: InterventionSourceKind::LiveHuman,
        };
        // queued in order, one per step, none dropped
        assert_eq!(d1, take(FORWARD));
        assert_eq!(d2, take(TURN_RIGHT));
    }

    #[test]
    fn stale_hold_repeats_once_then_pauses() {
        let (mut src, tx, _out, env) = setup(fast());
        let a_n = Action::Discrete(TURN_LEFT);
        tx.send(act(FORWARD)).unwrap();
        assert!(matches!(src.decide(0, &env, &a_n).unwrap(), Decision::Takeover { .. }));
        assert!(matches!(src.decide(1, &env, &a_n).unwrap(), Decision::Takeover { .. }));
        assert_eq!(src.decide(2, &env, &a_n).unwrap(), Decision::Pause);
        assert_eq!(src.mode(), SessionMode::Paused);
        tx.send(Inbound::Msg(1, ClientMsg::Resume(super::super::protocol::ControlMsg { v: 1 }))).unwrap();
        assert_eq!(src.decide(3, &env, &a_n).unwrap(), Decision::Novice);
    }

    #[test]
    fn controller_disconnect_pauses_by_default() {
        let (mut src, tx, _out, env) = setup(fast());
        let a_n = Action::Discrete(TURN_LEFT);
        tx.send(Inbound::Msg(1, ClientMsg::Intervene(super::super::protocol::InterventionMsg {
            v: 1,
            active: true,
            action: None,
        })))
        .unwrap();
        tx.send(Inbound::Disconnected(1)).unwrap();
        assert_eq!(src.decide(0, &env, &a_n).unwrap(), Decision::Pause);
    }

    #[test]
    fn oracle_fallback_keeps_training() {
        let (mut src, tx, _out, env) = setup(LiveConfig {
            fallback: Fallback::Oracle,
            ..fast()
        });
        let a_n = Action::Discrete(TURN_LEFT);
        tx.send(act(FORWARD)).unwrap();
        tx.send(Inbound::Disconnected(1)).unwrap();
        assert_eq!(src.decide(0, &env, &a_n).unwrap(), Decision::Novice);
    }

    #[test]
    fn second_client_cannot_steal_control() {
        let (mut src, tx, _out, env) = setup(fast());
        let (other_tx, other_rx) = mpsc::channel();
        src.clients.add(2, other_tx);
        tx.send(act(FORWARD)).unwrap();
        tx.send(Inbound::Msg(2, ClientMsg::intervene(Some(Action::Discrete(TURN_RIGHT))))).unwrap();
        let d = src.decide(0, &env, &Action::Discrete(TURN_LEFT)).unwrap();
        assert!(matches!(d, Decision::Takeover { action: Action::Discrete(FORWARD), .. }));
        let msgs: Vec<String> = other_rx.try_iter().collect();
        assert!(msgs.iter().any(|m| m.contains(r#""type":"error""#)), "{msgs:?}");
    }

    #[test]
    fn out_of_space_action_is_rejected_not_fatal() {
        let (mut src, tx, out, env) = setup(fast());
        tx.send(act(9)).unwrap();
        assert_eq!(src.decide(0, &env, &Action::Discrete(TURN_LEFT)).unwrap(), Decision::Novice);
        assert!(out.try_iter().any(|m| m.contains("outside the action space")));
    }
}
