//! TRK1 tracking datagrams and the loopback UDP bridge.
//!
//! Layout (72 bytes, little-endian): magic `TRK1`, `u32` object id, then
//! `f64` timestamp, x, y, z, qx, qy, qz, qw.

use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose};

pub const DATAGRAM_LEN: usize = 72;
pub const MAGIC: &[u8; 4] = b"TRK1";

pub fn encode_tracking(pose: &Pose, object_id: u32) -> Result<[u8; DATAGRAM_LEN]> {
    if !pose.is_finite() {
        return Err(Error::Argument("cannot encode a non-finite pose".into()));
    }
    let half = pose.yaw / 2.0;
    let fields = [
        pose.timestamp,
        pose.x,
        pose.y,
        pose.z,
        0.0,
        0.0,
        half.sin(),
        half.cos(),
    ];
    let mut out = [0u8; DATAGRAM_LEN];
    out[..4].copy_from_slice(MAGIC);
    out[4..8].copy_from_slice(&object_id.to_le_bytes());
    for (k, v) in fields.iter().enumerate() {
        out[8 + 8 * k..16 + 8 * k].copy_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tracking(bytes: &[u8]) -> Result<(u32, Pose)> {
    if bytes.len() != DATAGRAM_LEN {
        return Err(Error::Protocol(format!(
            "datagram is {} bytes, expected {DATAGRAM_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Protocol("bad datagram magic".into()));
    }
    let id = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let f = |k: usize| f64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes"));
    let [t, x, y, z, qx, qy, qz, qw] = std::array::from_fn(f);
    let values = [t, x, y, z, qx, qy, qz, qw];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Protocol("non-finite datagram field".into()));
    }
    let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Protocol(format!("quaternion norm {norm} is not 1")));
    }
    let yaw = normalize_angle(2.0 * qz.atan2(qw));
    Ok((
        id,
        Pose {
            x,
            y,
            z,
            yaw,
            timestamp: t,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BridgeCounters {
    pub decoded: u64,
    pub dropped: u64,
}

/// Receives TRK1 datagrams on a background thread and forwards decoded
/// poses over a channel; malformed datagrams are counted and dropped.
pub struct UdpBridge {
    addr: SocketAddr,
    poses: Receiver<(u32, Pose)>,
    decoded: Arc<AtomicU64>,
    dropped: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl UdpBridge {
    pub fn bind(addr: &str) -> Result<Self> {
        let socket =
            UdpSocket::bind(addr).map_err(|e| Error::Startup(format!("cannot bind {addr}: {e}")))?;
        socket
            .set_read_timeout(Some(Duration::from_millis(20)))
            .map_err(|e| Error::Startup(e.to_string()))?;
        let local = socket.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let decoded = Arc::new(AtomicU64::new(0));
        let dropped = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (d1, d2, s) = (decoded.clone(), dropped.clone(), stop.clone());
        let handle = thread::spawn(move || {
            let mut buf = [0u8; 2048];
            while !s.load(Ordering::Relaxed) {
                let Ok(n) = socket.recv(&mut buf) else { continue };
                match decode_tracking(&buf[..n]) {
                    Ok(msg) => {
                        d1.fetch_add(1, Ordering::Relaxed);
                        if tx.send(msg).is_err() {
                            break;
                        }
                    }
                    Err(_) => {
                        d2.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        });
        Ok(Self {
            addr: local,
            poses: rx,
            decoded,
            dropped,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Poses received so far, without blocking.
    pub fn drain(&self) -> Vec<(u32, Pose)> {
        self.poses.try_iter().collect()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<(u32, Pose)> {
        self.poses.recv_timeout(timeout).ok()
    }

    pub fn counters(&self) -> BridgeCounters {
        BridgeCounters {
            decoded: self.decoded.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
        }
    }
}

impl Drop for UdpBridge {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Send `count` datagrams of a moving pose to `target` at `rate` Hz.
pub fn broadcast_poses(target: SocketAddr, object_id: u32, rate: f64, count: usize) -> Result<()> {
    if !(rate > 0.0) {
        return Err(Error::Argument("broadcast rate must be positive".into()));
    }
    let socket = UdpSocket::bind("127.0.0.1:0").map_err(|e| Error::Startup(e.to_string()))?;
    let period = Duration::from_secs_f64(1.0 / rate);
    let start = Instant::now();
    for k in 0..count {
        let t = k as f64 / rate;
        let pose = Pose::new(t.cos(), t.sin(), 0.0, t, t);
        socket.send_to(&encode_tracking(&pose, object_id)?, target)?;
        let due = period * (k as u32 + 1);
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            thread::sleep(wait);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoakReport {
    pub sent: u64,
    pub decoded: u64,
    pub dropped: u64,
}

/// Loopback soak: broadcast at `rate` Hz for `duration` seconds into a
/// fresh bridge and count what arrives.
pub fn loopback_soak(rate: f64, duration: f64) -> Result<SoakReport> {
    let bridge = UdpBridge::bind("127.0.0.1:0")?;
    let count = (rate * duration).round() as usize;
    broadcast_poses(bridge.local_addr(), 1, rate, count)?;
    let deadline = Instant::now() + Duration::from_millis(500);
    let mut received = 0u64;
    while received < count as u64 && Instant::now() < deadline {
        if bridge.recv_timeout(Duration::from_millis(20)).is_some() {
            received += 1;
        }
    }
    let c = bridge.counters();
    Ok(SoakReport {
        sent: count as u64,
        decoded: c.decoded,
        dropped: c.dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_assembled_datagram() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TRK1");
        bytes.extend_from_slice(&[7, 0, 0, 0]);
        // timestamp 0.0, x 1.5, y -2.0, z 0.0, qx 0, qy 0, qz 0, qw 1.0
        bytes.extend_from_slice(&[0; 8]);
        bytes.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xF8, 0x3F]);
        bytes.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x00, 0xC0]);
        bytes.extend_from_slice(&[0; 8 * 4]);
        bytes.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xF0, 0x3F]);
        assert_eq!(bytes.len(), 72);
        let (id, p) = decode_tracking(&bytes).unwrap();
        assert_eq!(id, 7);
        assert_eq!((p.x, p.y, p.z, p.yaw, p.timestamp), (1.5, -2.0, 0.0, 0.0, 0.0));
        let enc = encode_tracking(&Pose::planar(1.5, -2.0, 0.0), 7).unwrap();
        assert_eq!(&enc[..], &bytes[..]);
    }

    #[test]
    fn rejects_bad_length_and_magic() {
        let good = encode_tracking(&Pose::planar(0.0, 0.0, 1.0), 1).unwrap();
        assert!(matches!(decode_tracking(&good[..67]), Err(Error::Protocol(_))));
        let mut bad = good;
        bad[0] = b'X';
        assert!(matches!(decode_tracking(&bad), Err(Error::Protocol(_))));
    }

    #[test]
    fn corrupted_datagrams_are_counted() {
        let bridge = UdpBridge::bind("127.0.0.1:0").unwrap();
        let s = UdpSocket::bind("127.0.0.1:0").unwrap();
        for k in 0..10u8 {
            s.send_to(&[k; 72], bridge.local_addr()).unwrap();
        }
        let good = encode_tracking(&Pose::planar(1.0, 2.0, 0.5), 3).unwrap();
        s.send_to(&good, bridge.local_addr()).unwrap();
        let (id, _) = bridge.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(id, 3);
        assert_eq!(bridge.counters().dropped, 10);
    }

    #[test]
    fn idle_bridge_is_empty() {
        let bridge = UdpBridge::bind("127.0.0.1:0").unwrap();
        thread::sleep(Duration::from_millis(30));
        assert!(bridge.drain().is_empty());
        assert_eq!(bridge.counters(), BridgeCounters::default());
    }

    #[test]
    fn bind_failure_is_startup_error() {
        assert!(matches!(UdpBridge::bind("256.0.0.1:0"), Err(Error::Startup(_))));
    }

    proptest! {
        #[test]
        fn round_trip(x in -1e3..1e3f64, y in -1e3..1e3f64, z in -5.0..5.0f64,
                      yaw in -3.14..3.14f64, t in 0.0..1e5f64, id: u32) {
            let p = Pose::new(x, y, z, yaw, t);
            let (id2, q) = decode_tracking(&encode_tracking(&p, id).unwrap()).unwrap();
            prop_assert_eq!(id, id2);
            prop_assert_eq!((q.x, q.y, q.z, q.timestamp), (p.x, p.y, p.z, p.timestamp));
            prop_assert!((normalize_angle(q.yaw - p.yaw)).abs() < 1e-12);
        }
    }
}
