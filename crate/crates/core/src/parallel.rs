//! Parallel grow-and-prune. Each step the coordinator broadcasts identical
//! weights and masks to κ workers; worker `i` grows partition `i`, trains,
//! and returns that partition densely. The coordinator stitches the dense
//! partitions together and prunes the whole model back to the target.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use rand::SeedableRng;

use crate::analysis::{estimate_grad_variance, probe_gradient_norm, ConvergenceReport};
use crate::checkpoint::{
    bias_name, layer_tensors, model_from_tensors, read_mask_block, read_tensor_block, weight_name,
    write_mask_block, write_tensor_block, NamedTensor, Reader,
};
use crate::cyclic::{best_index, init_sparse, probe_for, GapConfig, GapOutcome};
use crate::data::Dataset;
use crate::error::{GapError, Result};
use crate::model::{LayerId, Model};
use crate::partition::PartitionScheme;
use crate::rng::{derive_seed, rng_for, stream, Rng};
use crate::sparsity::{arg_grow_to, arg_prune_to, MaskSet, SparsityPolicy};
use crate::train::{EventKind, Method, Recorder, Snapshot, StepMessages, TrainSettings, Trainer};

pub const WIRE_MAGIC: &[u8; 4] = b"PGAP";
pub const WIRE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum WorkerMessage {
    Distribute {
        step: usize,
        seed: u64,
        partition_id: usize,
        model: Model,
        masks: MaskSet,
    },
    Result {
        step: usize,
        partition_id: usize,
        tensors: Vec<NamedTensor>,
    },
    Shutdown,
}

impl WorkerMessage {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = WIRE_MAGIC.to_vec();
        out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
        match self {
            WorkerMessage::Distribute {
                step,
                seed,
                partition_id,
                model,
                masks,
            } => {
                out.push(1);
                put_step(&mut out, *step)?;
                out.extend_from_slice(&seed.to_le_bytes());
                put_pid(&mut out, *partition_id)?;
                let all: Vec<usize> = (0..model.num_linear()).collect();
                write_tensor_block(&mut out, &layer_tensors(model, &all)?)?;
                write_mask_block(&mut out, masks)?;
            }
            WorkerMessage::Result {
                step,
                partition_id,
                tensors,
            } => {
                out.push(2);
                put_step(&mut out, *step)?;
                put_pid(&mut out, *partition_id)?;
                write_tensor_block(&mut out, tensors)?;
            }
            WorkerMessage::Shutdown => out.push(3),
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != WIRE_MAGIC {
            return Err(GapError::Format("bad PGAP magic".into()));
        }
        let version = r.u16()?;
        if version != WIRE_VERSION {
            return Err(GapError::Format(format!(
                "unsupported PGAP version {version}"
            )));
        }
        let msg = match r.u8()? {
            1 => {
                let step = r.u32()? as usize;
                let seed = r.u64()?;
                let partition_id = r.u16()? as usize;
                let model = model_from_tensors(read_tensor_block(&mut r)?)?;
                let masks = read_mask_block(&mut r, &model)?;
                WorkerMessage::Distribute {
                    step,
                    seed,
                    partition_id,
                    model,
                    masks,
                }
            }
            2 => WorkerMessage::Result {
                step: r.u32()? as usize,
                partition_id: r.u16()? as usize,
                tensors: read_tensor_block(&mut r)?,
            },
            3 => WorkerMessage::Shutdown,
            t => return Err(GapError::Format(format!("unknown PGAP message type {t}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

fn put_step(out: &mut Vec<u8>, step: usize) -> Result<()> {
    crate::checkpoint::put_u32(out, step)
}

fn put_pid(out: &mut Vec<u8>, pid: usize) -> Result<()> {
    let v = u16::try_from(pid).map_err(|_| GapError::Format("partition id exceeds u16".into()))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// How messages travel between coordinator and workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    /// Messages move as values over in-process channels.
    #[default]
    InProcess,
    /// Every message is encoded to bytes and decoded on the other side.
    Wire,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOptions {
    pub transport: Transport,
    /// Coordinator gives up if a step's results take longer than this.
    pub timeout: Duration,
    /// Forces the order in which workers deliver results; entry `s % len`
    /// applies to step `s`. Used to check order independence.
    pub completion_order: Option<Vec<Vec<usize>>>,
}

impl Default for ParallelOptions {
    fn default() -> Self {
        Self {
            transport: Transport::InProcess,
            timeout: Duration::from_secs(600),
            completion_order: None,
        }
    }
}

enum Packet {
    Value(Box<WorkerMessage>),
    Bytes(Vec<u8>),
}

fn pack(msg: WorkerMessage, transport: Transport) -> Result<Packet> {
    Ok(match transport {
        Transport::InProcess => Packet::Value(Box::new(msg)),
        Transport::Wire => Packet::Bytes(msg.encode()?),
    })
}

fn unpack(p: Packet) -> Result<WorkerMessage> {
    match p {
        Packet::Value(m) => Ok(*m),
        Packet::Bytes(b) => WorkerMessage::decode(&b),
    }
}

/// Layers whose weights worker `pid` returns: its partition, plus the layers
/// exempt from pruning for worker 0.
fn owned_layers(
    scheme: &PartitionScheme,
    policy: &SparsityPolicy,
    model: &Model,
    pid: usize,
) -> Vec<LayerId> {
    let mut layers = scheme.group(pid).to_vec();
    if pid == 0 {
        layers.extend((0..model.num_linear()).filter(|&id| policy.is_exempt(id)));
        layers.sort_unstable();
    }
    layers
}

/// Collects one step's results and checks they are complete and well formed.
#[derive(Debug)]
pub struct CombineState {
    step: usize,
    expected: Vec<Vec<(String, Vec<usize>)>>,
    received: BTreeMap<usize, Vec<NamedTensor>>,
    arrival: Vec<usize>,
}

impl CombineState {
    pub fn new(
        step: usize,
        base: &Model,
        scheme: &PartitionScheme,
        policy: &SparsityPolicy,
    ) -> Self {
        let expected = (0..scheme.kappa())
            .map(|pid| {
                let mut names = Vec::new();
                for id in owned_layers(scheme, policy, base, pid) {
                    let l = base.linear(id).expect("partitioned layer");
                    names.push((weight_name(id), l.weight.shape().to_vec()));
                    names.push((bias_name(id), l.bias.shape().to_vec()));
                }
                names
            })
            .collect();
        Self {
            step,
            expected,
            received: BTreeMap::new(),
            arrival: Vec::new(),
        }
    }

    pub fn accept(&mut self, msg: WorkerMessage) -> Result<()> {
        let WorkerMessage::Result {
            step,
            partition_id,
            tensors,
        } = msg
        else {
            return Err(GapError::Protocol("expected a Result message".into()));
        };
        if step != self.step {
            return Err(GapError::Protocol(format!(
                "result for step {step} during step {}",
                self.step
            )));
        }
        let Some(expected) = self.expected.get(partition_id) else {
            return Err(GapError::Protocol(format!(
                "unknown partition {partition_id}"
            )));
        };
        if self.received.contains_key(&partition_id) {
            return Err(GapError::Protocol(format!(
                "duplicate result for partition {partition_id}"
            )));
        }
        let got: Vec<(&str, &[usize])> = tensors
            .iter()
            .map(|t| (t.name.as_str(), t.tensor.shape()))
            .collect();
        let want: Vec<(&str, &[usize])> = expected
            .iter()
            .map(|(n, s)| (n.as_str(), s.as_slice()))
            .collect();
        if got != want {
            return Err(GapError::Protocol(format!(
                "partition {partition_id} returned tensors {got:?}, expected {want:?}"
            )));
        }
        self.received.insert(partition_id, tensors);
        self.arrival.push(partition_id);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.received.len() == self.expected.len()
    }

    pub fn arrival_order(&self) -> &[usize] {
        &self.arrival
    }

    /// Writes every partition's tensors into `base`, in partition order.
    pub fn combine(self, base: &mut Model) -> Result<()> {
        if !self.is_complete() {
            return Err(GapError::Protocol(format!(
                "combine with {} of {} results",
                self.received.len(),
                self.expected.len()
            )));
        }
        for tensors in self.received.into_values() {
            write_named(base, tensors)?;
        }
        Ok(())
    }
}

fn write_named(model: &mut Model, tensors: Vec<NamedTensor>) -> Result<()> {
    for t in tensors {
        let (id, field) = parse_name(&t.name)?;
        let l = model
            .linear_mut(id)
            .ok_or_else(|| GapError::Protocol(format!("no layer for {}", t.name)))?;
        let slot = if field == "weight" {
            &mut l.weight
        } else {
            &mut l.bias
        };
        if slot.shape() != t.tensor.shape() {
            return Err(GapError::Shape(format!(
                "{} has shape {:?}",
                t.name,
                t.tensor.shape()
            )));
        }
        *slot = t.tensor;
    }
    Ok(())
}

fn parse_name(name: &str) -> Result<(usize, &str)> {
    let bad = || GapError::Protocol(format!("unexpected tensor name {name}"));
    let rest = name.strip_prefix("fc").ok_or_else(bad)?;
    let (id, field) = rest.split_once('.').ok_or_else(bad)?;
    if field != "weight" && field != "bias" {
        return Err(bad());
    }
    Ok((id.parse().map_err(|_| bad())?, field))
}

/// Releases results in a fixed order when a completion order is forced.
struct TurnGate {
    state: Mutex<(usize, usize)>,
    cv: Condvar,
    orders: Option<Vec<Vec<usize>>>,
    cancelled: AtomicBool,
}

impl TurnGate {
    fn order(&self, step: usize) -> Option<&[usize]> {
        self.orders.as_ref().map(|o| o[step % o.len()].as_slice())
    }

    fn wait_turn(&self, step: usize, pid: usize, timeout: Duration) -> Result<()> {
        let Some(order) = self.order(step) else {
            return Ok(());
        };
        let guard = self.state.lock().expect("gate lock");
        let (_guard, res) = self
            .cv
            .wait_timeout_while(guard, timeout, |s| {
                !self.is_cancelled() && !(s.0 == step && order.get(s.1) == Some(&pid))
            })
            .expect("gate lock");
        if self.is_cancelled() {
            return Err(GapError::Protocol("run cancelled".into()));
        }
        if res.timed_out() {
            return Err(GapError::Timeout(format!(
                "worker {pid} waiting for its turn at step {step}"
            )));
        }
        Ok(())
    }

    fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::Relaxed)
    }

    fn cancel(&self) {
        let _guard = self.state.lock().expect("gate lock");
        self.cancelled.store(true, Ordering::Relaxed);
        self.cv.notify_all();
    }

    /// Advances the turn; a stale call from an earlier step is ignored.
    fn done(&self, step: usize) {
        if self.orders.is_some() {
            let mut s = self.state.lock().expect("gate lock");
            if s.0 == step {
                s.1 += 1;
            }
            self.cv.notify_all();
        }
    }

    fn start_step(&self, step: usize) {
        *self.state.lock().expect("gate lock") = (step, 0);
        self.cv.notify_all();
    }
}

struct WorkerCtx<'a> {
    pid: usize,
    data: &'a Dataset,
    settings: TrainSettings,
    epochs: usize,
    policy: &'a SparsityPolicy,
    scheme: &'a PartitionScheme,
    transport: Transport,
    gate: &'a TurnGate,
    timeout: Duration,
}

fn worker_loop(ctx: WorkerCtx<'_>, inbox: Receiver<Packet>, outbox: Sender<Packet>) -> Result<()> {
    while let Ok(packet) = inbox.recv() {
        match unpack(packet)? {
            WorkerMessage::Distribute {
                step,
                seed,
                partition_id,
                mut model,
                mut masks,
            } => {
                if partition_id != ctx.pid {
                    return Err(GapError::Protocol(format!(
                        "worker {} received partition {partition_id}",
                        ctx.pid
                    )));
                }
                arg_grow_to(&mut masks, ctx.policy, ctx.scheme.group(partition_id))?;
                let mut trainer =
                    Trainer::new(ctx.data, &model, ctx.settings, Rng::seed_from_u64(seed))?;
                trainer.train_phase(&mut model, Some(&masks), ctx.epochs, |_, _| {
                    if ctx.gate.is_cancelled() {
                        return Err(GapError::Protocol("run cancelled".into()));
                    }
                    Ok(())
                })?;
                let layers = owned_layers(ctx.scheme, ctx.policy, &model, partition_id);
                let reply = WorkerMessage::Result {
                    step,
                    partition_id,
                    tensors: layer_tensors(&model, &layers)?,
                };
                ctx.gate.wait_turn(step, ctx.pid, ctx.timeout)?;
                let sent = outbox.send(pack(reply, ctx.transport)?);
                ctx.gate.done(step);
                if sent.is_err() {
                    return Ok(());
                }
            }
            WorkerMessage::Shutdown => return Ok(()),
            WorkerMessage::Result { .. } => {
                return Err(GapError::Protocol(
                    "worker received a Result message".into(),
                ));
            }
        }
    }
    Ok(())
}

pub fn run_pgap(
    config: &GapConfig,
    model: Model,
    data: &Dataset,
    options: &ParallelOptions,
) -> Result<GapOutcome> {
    config.validate(&model)?;
    let scheme = config.partition_for_round(&model, 0)?;
    let kappa = scheme.kappa();
    if let Some(orders) = &options.completion_order {
        for o in orders {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != (0..kappa).collect::<Vec<_>>() {
                return Err(GapError::Config(format!(
                    "completion order {o:?} is not a permutation of 0..{kappa}"
                )));
            }
        }
        if orders.is_empty() {
            return Err(GapError::Config("empty completion order list".into()));
        }
    }
    let gate = TurnGate {
        state: Mutex::new((usize::MAX, 0)),
        cv: Condvar::new(),
        orders: options.completion_order.clone(),
        cancelled: AtomicBool::new(false),
    };
    let (result_tx, result_rx) = channel::<Packet>();
    let mut worker_txs = Vec::with_capacity(kappa);
    let mut worker_rxs = Vec::with_capacity(kappa);
    for _ in 0..kappa {
        let (tx, rx) = channel::<Packet>();
        worker_txs.push(tx);
        worker_rxs.push(rx);
    }

    thread::scope(|s| {
        let mut handles = Vec::with_capacity(kappa);
        for (pid, inbox) in worker_rxs.into_iter().enumerate() {
            let ctx = WorkerCtx {
                pid,
                data,
                settings: config.train,
                epochs: config.epochs_per_step,
                policy: &config.policy,
                scheme: &scheme,
                transport: options.transport,
                gate: &gate,
                timeout: options.timeout,
            };
            let outbox = result_tx.clone();
            handles.push(s.spawn(move || worker_loop(ctx, inbox, outbox)));
        }
        drop(result_tx);
        let outcome = coordinate(
            config,
            model,
            data,
            options,
            &scheme,
            &gate,
            &worker_txs,
            &result_rx,
        );
        if outcome.is_err() {
            gate.cancel();
        }
        for tx in &worker_txs {
            if let Ok(p) = pack(WorkerMessage::Shutdown, options.transport) {
                let _ = tx.send(p);
            }
        }
        drop(worker_txs);
        drop(result_rx);
        let mut worker_err = None;
        for h in handles {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => worker_err = worker_err.or(Some(e)),
                Err(_) => {
                    worker_err = worker_err.or(Some(GapError::Protocol("worker panicked".into())))
                }
            }
        }
        match (outcome, worker_err) {
            (Ok(o), None) => Ok(o),
            (Ok(_), Some(e)) => Err(e),
            (Err(e), _) => Err(e),
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn coordinate(
    config: &GapConfig,
    mut model: Model,
    data: &Dataset,
    options: &ParallelOptions,
    scheme: &PartitionScheme,
    gate: &TurnGate,
    worker_txs: &[Sender<Packet>],
    result_rx: &Receiver<Packet>,
) -> Result<GapOutcome> {
    let policy = &config.policy;
    let prunable = policy.prunable_layers(&model);
    let kappa = scheme.kappa();
    let mut masks = init_sparse(&mut model, policy, config.seed)?;
    let mut rec = Recorder::new(&config.run_id, Method::Pgap, &masks, prunable.clone());
    rec.partition = Some(scheme.clone());
    rec.track(&masks);
    let probe = if config.diagnostics {
        Some(probe_for(
            config.seed,
            data,
            config.probe_samples,
            config.train.batch_size,
        )?)
    } else {
        None
    };
    let mut report = ConvergenceReport::default();

    for step in 0..config.steps {
        rec.step = Some(step);
        rec.round = Some(step);
        gate.start_step(step);
        let mut counts = StepMessages {
            distribute: 0,
            results: 0,
        };
        for (pid, tx) in worker_txs.iter().enumerate() {
            let msg = WorkerMessage::Distribute {
                step,
                seed: derive_seed(config.seed, stream::WORKER, step as u64, pid as u64),
                partition_id: pid,
                model: model.clone(),
                masks: masks.clone(),
            };
            tx.send(pack(msg, options.transport)?)
                .map_err(|_| GapError::Protocol(format!("worker {pid} is gone")).at_step(step))?;
            counts.distribute += 1;
        }
        let mut state = CombineState::new(step, &model, scheme, policy);
        while !state.is_complete() {
            let packet = match result_rx.recv_timeout(options.timeout) {
                Ok(p) => p,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(GapError::Timeout(format!(
                        "waiting for worker results after {:?}",
                        options.timeout
                    ))
                    .at_step(step));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(GapError::Protocol("all workers exited".into()).at_step(step));
                }
            };
            state.accept(unpack(packet)?).map_err(|e| e.at_step(step))?;
            counts.results += 1;
        }
        rec.record
            .arrival_orders
            .push(state.arrival_order().to_vec());
        rec.record.messages.push(counts);
        state.combine(&mut model).map_err(|e| e.at_step(step))?;
        rec.record.epochs_trained += config.epochs_per_step;

        let before = rec.scoped_sparsity(&masks);
        arg_grow_to(&mut masks, policy, &prunable)?;
        rec.event(
            EventKind::Combine,
            &model,
            &masks,
            data,
            None,
            prunable.clone(),
            before,
            None,
        )?;
        rec.track(&masks);
        if let Some(p) = &probe {
            report
                .grad_norm_sq
                .push(probe_gradient_norm(&model, &masks, &p.x, &p.y)?);
        }
        rec.record.round_coverage.push(1.0);

        let before = rec.scoped_sparsity(&masks);
        let pr =
            arg_prune_to(&mut model, &mut masks, policy, &prunable).map_err(|e| e.at_step(step))?;
        rec.event(
            EventKind::Prune,
            &model,
            &masks,
            data,
            None,
            prunable.clone(),
            before,
            pr.delta_sq,
        )?;
        if probe.is_some() {
            report.delta_sq.push(pr.delta_sq.unwrap_or(0.0));
        }
        rec.record
            .step_evals
            .push(crate::train::evaluate(&model, &data.validation)?);
        if config.snapshot_steps {
            rec.record.snapshots.push(Snapshot {
                step,
                model: model.clone(),
                masks: masks.clone(),
            });
        }
    }

    rec.step = None;
    rec.round = None;
    let mut trainer = Trainer::new(
        data,
        &model,
        config.train,
        rng_for(config.seed, stream::DATA, 0, 0),
    )?;
    trainer.train_phase(
        &mut model,
        Some(&masks),
        config.finetune_epochs,
        |m, stats| {
            rec.epoch_row(m, &masks, data, stats)?;
            Ok(())
        },
    )?;
    debug_assert_eq!(kappa, worker_txs.len());
    rec.record.best_step = best_index(&rec.record.step_evals);
    if let Some(p) = &probe {
        report.rounds = report.grad_norm_sq.len();
        report.grad_variance = estimate_grad_variance(&model, &masks, &p.batches)?;
        rec.record.convergence = Some(report);
    }
    let record = rec.finish(&model, data)?;
    Ok(GapOutcome {
        model,
        masks,
        record,
    })
}
