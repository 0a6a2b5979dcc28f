//! Binary columnar trajectory logs.
//!
//! Layout (little-endian): magic, version, dof, robot id, dt, frame count,
//! status, waypoint and outcome counts; then one contiguous column per
//! channel and joint (`q`, `qd`, `tau`), the active-waypoint column, the
//! waypoints and finally the per-waypoint outcomes.

use std::io::{Read, Write};

use super::{ControlError, EpisodeStatus, TrajectoryLog, Waypoint, WaypointOutcome};

const MAGIC: &[u8; 8] = b"DYNIDLOG";
const VERSION: u32 = 1;

fn status_code(s: EpisodeStatus) -> u8 {
    match s {
        EpisodeStatus::Ok => 0,
        EpisodeStatus::NaNDetected => 1,
        EpisodeStatus::Diverged => 2,
        EpisodeStatus::Timeout => 3,
    }
}

fn status_from(c: u8) -> Result<EpisodeStatus, ControlError> {
    Ok(match c {
        0 => EpisodeStatus::Ok,
        1 => EpisodeStatus::NaNDetected,
        2 => EpisodeStatus::Diverged,
        3 => EpisodeStatus::Timeout,
        _ => return Err(ControlError::Format(format!("unknown status code {c}"))),
    })
}

fn outcome_code(o: WaypointOutcome) -> u8 {
    match o {
        WaypointOutcome::Settled => 0,
        WaypointOutcome::TimedOut => 1,
        WaypointOutcome::Aborted => 2,
    }
}

fn outcome_from(c: u8) -> Result<WaypointOutcome, ControlError> {
    Ok(match c {
        0 => WaypointOutcome::Settled,
        1 => WaypointOutcome::TimedOut,
        2 => WaypointOutcome::Aborted,
        _ => return Err(ControlError::Format(format!("unknown outcome code {c}"))),
    })
}

pub fn write_log<W: Write>(mut out: W, log: &TrajectoryLog) -> Result<(), ControlError> {
    let frames = log.len();
    let dof = log.dof;
    if log.q.len() != frames * dof || log.qd.len() != frames * dof || log.tau.len() != frames * dof {
        return Err(ControlError::Format("channel lengths disagree with frame count".into()));
    }
    let mut buf = Vec::with_capacity(48 + frames * (3 * dof * 8 + 2));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dof as u32).to_le_bytes());
    buf.extend_from_slice(&log.robot_id.to_le_bytes());
    buf.extend_from_slice(&log.dt.to_le_bytes());
    buf.extend_from_slice(&(frames as u64).to_le_bytes());
    buf.push(status_code(log.status));
    buf.extend_from_slice(&(log.waypoints.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(log.outcomes.len() as u32).to_le_bytes());
    for channel in [&log.q, &log.qd, &log.tau] {
        for j in 0..dof {
            for k in 0..frames {
                buf.extend_from_slice(&channel[k * dof + j].to_le_bytes());
            }
        }
    }
    for a in &log.active {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    for w in &log.waypoints {
        if w.q_target.len() != dof {
            return Err(ControlError::Format("waypoint dimension mismatch".into()));
        }
        for v in w.q_target.iter().chain([&w.hold_tolerance, &w.settle_time, &w.max_time]) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend(log.outcomes.iter().map(|o| outcome_code(*o)));
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ControlError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| ControlError::Format(format!("truncated log at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ControlError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ControlError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ControlError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ControlError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ControlError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ControlError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn read_log<R: Read>(mut input: R) -> Result<TrajectoryLog, ControlError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(ControlError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(ControlError::Format(format!("unsupported log version {version}")));
    }
    let dof = c.u32()? as usize;
    let robot_id = c.u64()?;
    let dt = c.f64()?;
    let frames = c.u64()? as usize;
    let status = status_from(c.u8()?)?;
    let n_way = c.u32()? as usize;
    let n_out = c.u32()? as usize;
    let expected = frames
        .checked_mul(dof)
        .and_then(|x| x.checked_mul(24))
        .and_then(|x| x.checked_add(frames * 2))
        .ok_or_else(|| ControlError::Format("frame count overflow".into()))?;
    if expected > data.len() {
        return Err(ControlError::Format("frame count exceeds file size".into()));
    }

    let mut log = TrajectoryLog::new(robot_id, dt, dof, Vec::with_capacity(n_way));
    log.status = status;
    let mut channels = [vec![0.0; frames * dof], vec![0.0; frames * dof], vec![0.0; frames * dof]];
    for ch in channels.iter_mut() {
        for j in 0..dof {
            for k in 0..frames {
                ch[k * dof + j] = c.f64()?;
            }
        }
    }
    let [q, qd, tau] = channels;
    log.q = q;
    log.qd = qd;
    log.tau = tau;
    log.active = (0..frames).map(|_| c.u16()).collect::<Result<_, _>>()?;
    for _ in 0..n_way {
        let q_target = (0..dof).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        log.waypoints.push(Waypoint {
            q_target,
            hold_tolerance: c.f64()?,
            settle_time: c.f64()?,
            max_time: c.f64()?,
        });
    }
    log.outcomes = (0..n_out)
        .map(|_| c.u8().and_then(outcome_from))
        .collect::<Result<_, _>>()?;
    if c.pos != data.len() {
        return Err(ControlError::Format("trailing bytes after log".into()));
    }
    Ok(log)
}

/// One human-readable line per episode.
pub fn summary_line(log: &TrajectoryLog) -> String {
    let count = |o: WaypointOutcome| log.outcomes.iter().filter(|x| **x == o).count();
    format!(
        "robot={} status={:?} frames={} duration={:.3}s waypoints={} settled={} timed_out={} aborted={}",
        log.robot_id,
        log.status,
        log.len(),
        log.duration(),
        log.waypoints.len(),
        count(WaypointOutcome::Settled),
        count(WaypointOutcome::TimedOut),
        count(WaypointOutcome::Aborted),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryLog {
        let w = Waypoint {
            q_target: vec![0.1, -0.2],
            hold_tolerance: 0.02,
            settle_time: 0.2,
            max_time: 4.0,
        };
        let mut log = TrajectoryLog::new(42, 1e-3, 2, vec![w.clone(), w]);
        for k in 0..5 {
            let x = k as f64;
            log.push(&[x, -x], &[0.5 * x, f64::NAN], &[1.0 / 3.0, x * x], (k / 3) as u16);
        }
        log.outcomes = vec![WaypointOutcome::Settled, WaypointOutcome::Aborted];
        log.status = EpisodeStatus::NaNDetected;
        log
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let log = sample();
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        let back = read_log(buf.as_slice()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.qd), bits(&log.qd));
        assert_eq!(back.q, log.q);
        assert_eq!(back.tau, log.tau);
        assert_eq!(back.active, log.active);
        assert_eq!(back.waypoints, log.waypoints);
        assert_eq!(back.outcomes, log.outcomes);
        assert_eq!(back.status, log.status);
        assert_eq!((back.robot_id, back.dt, back.dof), (42, 1e-3, 2));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let mut buf = Vec::new();
        write_log(&mut buf, &sample()).unwrap();
        for cut in [0, 7, 20, buf.len() / 2, buf.len() - 1] {
            assert!(matches!(read_log(&buf[..cut]), Err(ControlError::Format(_))));
        }
    }

    #[test]
    fn summary_mentions_status() {
        let line = summary_line(&sample());
        assert!(line.starts_with("robot=42 status=NaNDetected frames=5"));
        assert!(line.contains("aborted=1"));
    }
}
