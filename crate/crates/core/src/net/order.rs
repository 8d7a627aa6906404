use std::ops::Range;

use super::sim::SimulationTrace;
use super::NetError;

/// Shortest window accepted by [`order_parameter`].
pub const MIN_ORDER_WINDOW: usize = 100;

/// Congestion order parameter over a window of trace records.
///
/// The ratio of the mean per-tick growth of the in-flight count to the mean
/// per-tick creation rate, clipped to `[0, 1]`. Zero in free flow; approaches
/// one when every created packet stays in the network.
pub fn order_parameter(trace: &SimulationTrace, window: Range<usize>) -> Result<f64, NetError> {
    if window.end > trace.len() || window.start >= window.end {
        return Err(NetError::Invalid(format!("window {window:?} does not fit a trace of {} records", trace.len())));
    }
    if window.len() < MIN_ORDER_WINDOW {
        return Err(NetError::Invalid(format!(
            "order parameter window must span at least {MIN_ORDER_WINDOW} ticks, got {}",
            window.len()
        )));
    }
    let start = trace.before(window.start);
    let end = trace.records[window.end - 1];
    let created = end.created - start.created;
    if created == 0 {
        return Err(NetError::UndefinedOrderParameter);
    }
    let growth = end.in_flight as f64 - start.in_flight as f64;
    Ok((growth / created as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::sim::TickRecord;

    fn synthetic(per_tick_created: u64, per_tick_kept: u64, ticks: u64) -> SimulationTrace {
        let records = (0..ticks)
            .map(|t| {
                let created = per_tick_created * (t + 1);
                let in_flight = per_tick_kept * (t + 1);
                TickRecord {
                    tick: t,
                    created,
                    delivered: created - in_flight,
                    in_flight,
                    queue_total: in_flight,
                    ..TickRecord::default()
                }
            })
            .collect();
        SimulationTrace { nodes: 4, service_rate: 1, seed: 0, initial: TickRecord::default(), records }
    }

    #[test]
    fn free_flow_is_zero() {
        let t = synthetic(4, 0, 400);
        assert_eq!(order_parameter(&t, 100..400).unwrap(), 0.0);
    }

    #[test]
    fn full_accumulation_is_one() {
        let t = synthetic(4, 4, 400);
        assert_eq!(order_parameter(&t, 100..400).unwrap(), 1.0);
        let half = synthetic(4, 2, 400);
        assert_eq!(order_parameter(&half, 0..400).unwrap(), 0.5);
    }

    #[test]
    fn rejects_bad_windows() {
        let t = synthetic(1, 0, 300);
        assert!(order_parameter(&t, 0..50).is_err());
        assert!(order_parameter(&t, 250..400).is_err());
        let idle = synthetic(0, 0, 300);
        assert!(matches!(order_parameter(&idle, 0..300), Err(NetError::UndefinedOrderParameter)));
    }
}
