use std::sync::Arc;
use std::time::Duration;

use neurofarm_core::env::EnvDescriptor;
use neurofarm_core::evalmod::{
    EvalContext, EvalModule, FitnessRecord, RegError, Status, CMD_RESET, CMD_START, CMD_STOP, REG_COMMAND,
    REG_FRAME_CAP, REG_GAME_ID, REG_SCORE, REG_STATUS, ROM_WINDOW,
};
use neurofarm_core::farm::protocol::BulkTarget;
use neurofarm_core::farm::*;
use neurofarm_core::ga::xavier_init;
use neurofarm_core::{default_spec, Genome};

fn jobs(n: usize, cap: u32) -> Vec<EvalJob> {
    let spec = default_spec();
    let desc = EnvDescriptor::default().with_frame_cap(cap);
    (0..n)
        .map(|i| {
            let genome = Arc::new(xavier_init(&spec, 77 + i as u64 / 2, (i / 2) as u64));
            EvalJob { genome, desc, seed: 1000 + i as u64, priority: (i % 3) as i32 }
        })
        .collect()
}

fn sorted(mut v: Vec<FitnessRecord>) -> Vec<FitnessRecord> {
    v.sort();
    v
}

fn spawn_workers(n: usize, modules: usize) -> Vec<WorkerHandle> {
    (0..n)
        .map(|_| {
            let cfg = WorkerConfig { modules, ..WorkerConfig::default() };
            Worker::bind("127.0.0.1:0", cfg).unwrap().spawn().unwrap()
        })
        .collect()
}

fn gateway(handles: &[WorkerHandle], mode: NotifyMode) -> Gateway {
    let addrs: Vec<String> = handles.iter().map(|h| h.addr().to_string()).collect();
    Gateway::connect(&addrs, GatewayOptions { mode, ..GatewayOptions::default() }).unwrap()
}

#[test]
fn results_do_not_depend_on_the_dispatcher() {
    let js = jobs(16, 300);
    let ctx = Arc::new(EvalContext::default());
    let reference = InProcessPool::new(1, Arc::clone(&ctx)).dispatch(&js).unwrap();
    for (r, j) in reference.iter().zip(&js) {
        assert_eq!(r.genome_id, j.genome.id());
        assert_eq!(r.eval_seed, j.seed);
    }

    assert_eq!(InProcessPool::new(8, Arc::clone(&ctx)).dispatch(&js).unwrap(), reference);

    let one = spawn_workers(1, 2);
    assert_eq!(gateway(&one, NotifyMode::Polling).dispatch(&js).unwrap(), reference);

    let four = spawn_workers(4, 2);
    let mut gw = gateway(&four, NotifyMode::Push);
    assert_eq!(gw.dispatch(&js).unwrap(), reference);
    let stats = gw.stats();
    assert_eq!(stats.jobs_completed, 16);
    assert_eq!(stats.frames, reference.iter().map(|r| u64::from(r.frames)).sum::<u64>());
    assert!(stats.bytes_in > 0 && stats.bytes_out > 0);
}

#[test]
fn killing_a_worker_mid_run_requeues_its_jobs() {
    let js = jobs(24, 300);
    let reference = InProcessPool::new(2, Arc::new(EvalContext::default())).dispatch(&js).unwrap();
    for mode in [NotifyMode::Push, NotifyMode::Polling] {
        let mut handles = spawn_workers(4, 1);
        let mut gw = gateway(&handles, mode);
        let mut victim = handles.remove(2);
        let killer = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(120));
            victim.kill();
        });
        let got = gw.dispatch(&js).unwrap();
        killer.join().unwrap();
        assert_eq!(sorted(got.clone()), sorted(reference.clone()));
        assert_eq!(got, reference);
        let lost = gw.workers().iter().filter(|w| w.status == WorkerStatus::Lost).count();
        assert_eq!(lost, 1, "{mode:?}");
    }
}

#[test]
fn losing_every_worker_reports_the_completed_subset() {
    let js = jobs(6, 200);
    let mut handles = spawn_workers(1, 1);
    let mut gw = gateway(&handles, NotifyMode::Push);
    handles[0].kill();
    let err = gw.dispatch(&js).unwrap_err();
    assert_eq!(err.completed.len(), js.len());
    assert!(err.message.contains("lost"));
}

#[test]
fn gateway_reuses_cached_genomes() {
    let spec = default_spec();
    let g = Arc::new(Genome::zeros(&spec, 5));
    let desc = EnvDescriptor::default().with_frame_cap(100);
    let js: Vec<EvalJob> = (0..4).map(|s| EvalJob { genome: Arc::clone(&g), desc, seed: s, priority: 0 }).collect();
    let handles = spawn_workers(1, 1);
    let mut gw = gateway(&handles, NotifyMode::Push);
    gw.dispatch(&js).unwrap();
    let first = gw.stats().bytes_out;
    gw.dispatch(&js).unwrap();
    let second = gw.stats().bytes_out - first;
    // the second round carries no parameter upload
    assert!(second < 4096, "{second} bytes");
    assert!(first > 2 * spec.total_params() as u64);
}

/// Replays one register script on a local module and through the wire.
#[test]
fn remote_registers_match_local_semantics() {
    let spec = default_spec();
    let genome = Arc::new(Genome::zeros(&spec, 9));
    let ctx = Arc::new(EvalContext::default());
    let local = EvalModule::new(Arc::clone(&ctx));
    let handles = spawn_workers(1, 1);
    let mut gw = gateway(&handles, NotifyMode::Polling);

    let script: Vec<(u32, u64)> = vec![
        (REG_COMMAND, u64::from(CMD_STOP)),
        (REG_COMMAND, u64::from(CMD_START)),
        (REG_SCORE, 5),
        (0x0FFF_FFF0, 1),
        (REG_GAME_ID, 99),
        (REG_GAME_ID, 0),
        (REG_FRAME_CAP, 400),
        (REG_COMMAND, u64::from(CMD_RESET)),
    ];
    for &(addr, value) in &script {
        let l = local.write(addr, value);
        let r = gw.reg_write(0, 0, addr, value);
        assert_eq!(r.map_err(reg), l, "write {addr:#x}");
    }

    local.load_genome(Arc::clone(&genome)).unwrap();
    local.write_bytes(ROM_WINDOW, &3u64.to_le_bytes()).unwrap();
    local.write(REG_COMMAND, u64::from(CMD_START)).unwrap();
    assert!(local.wait_completed(1, Duration::from_secs(30)));

    gw.bulk_write(0, 0, BulkTarget::GenomeCache, 9, 0, genome.to_bytes()).unwrap();
    let job = EvalJob { genome, desc: EnvDescriptor::default().with_frame_cap(400), seed: 3, priority: 0 };
    let remote = gw.dispatch(std::slice::from_ref(&job)).unwrap()[0];
    assert_eq!(Some(remote), local.result());

    for addr in [REG_STATUS, REG_SCORE, REG_GAME_ID, REG_FRAME_CAP, REG_COMMAND, 0x0FFF_FFF0] {
        assert_eq!(gw.reg_read(0, 0, addr).map_err(reg), local.read(addr), "read {addr:#x}");
    }
    assert!(Status::from_u32(local.read(REG_STATUS).unwrap() as u32).unwrap().is_done());
    assert_eq!(gw.reg_write(0, 0, REG_COMMAND, u64::from(CMD_STOP)).map_err(reg), Err(RegError::IllegalTransition));
    assert!(matches!(gw.reg_read(0, 7, REG_STATUS), Err(RemoteError::Farm { .. })));
}

fn reg(e: RemoteError) -> RegError {
    match e {
        RemoteError::Register(r) => r,
        other => panic!("expected a register error, got {other}"),
    }
}
