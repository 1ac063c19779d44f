//! Round-based earliest-arrival transit search.
//!
//! Labels are absolute times in seconds after service-day midnight.
//! `ready[s]` is the earliest time a traveller can board at stop `s`;
//! `arrival[s]` the earliest time a vehicle drops them at `s`. Alighting adds
//! the minimum transfer slack before the next boarding, whether at the same
//! stop or after a walking transfer.

use super::timetable::TimetableNetwork;

/// Reusable per-thread buffers.
#[derive(Debug, Clone, Default)]
pub struct RaptorScratch {
    ready: Vec<f64>,
    arrival: Vec<f64>,
    marked: Vec<bool>,
    marked_list: Vec<u32>,
    arrived: Vec<bool>,
    arrived_list: Vec<u32>,
    route_from: Vec<u32>,
    route_list: Vec<u32>,
    pub rounds: usize,
}

const NONE: u32 = u32::MAX;

impl RaptorScratch {
    fn reset(&mut self, n_stops: usize, n_routes: usize) {
        self.ready.clear();
        self.ready.resize(n_stops, f64::INFINITY);
        self.arrival.clear();
        self.arrival.resize(n_stops, f64::INFINITY);
        self.marked.clear();
        self.marked.resize(n_stops, false);
        self.arrived.clear();
        self.arrived.resize(n_stops, false);
        self.marked_list.clear();
        self.arrived_list.clear();
        self.route_from.clear();
        self.route_from.resize(n_routes, NONE);
        self.route_list.clear();
        self.rounds = 0;
    }

    /// Earliest vehicle arrival per stop from the last query.
    pub fn arrivals(&self) -> &[f64] {
        &self.arrival
    }

    fn mark(&mut self, s: u32) {
        if !self.marked[s as usize] {
            self.marked[s as usize] = true;
            self.marked_list.push(s);
        }
    }
}

/// Runs rounds until no label improves. `access` holds (stop, ready time).
pub fn raptor(
    net: &TimetableNetwork,
    access: &[(u32, f64)],
    min_transfer_s: f64,
    scratch: &mut RaptorScratch,
) {
    scratch.reset(net.stops.len(), net.routes.len());
    for &(s, t) in access {
        if t < scratch.ready[s as usize] {
            scratch.ready[s as usize] = t;
            scratch.mark(s);
        }
    }

    while !scratch.marked_list.is_empty() {
        scratch.rounds += 1;

        // collect routes through marked stops, from their earliest marked position
        for &s in &scratch.marked_list {
            for &(r, pos) in &net.stop_routes[s as usize] {
                let cur = &mut scratch.route_from[r as usize];
                if *cur == NONE {
                    scratch.route_list.push(r);
                    *cur = pos;
                } else if pos < *cur {
                    *cur = pos;
                }
            }
        }
        for &s in &scratch.marked_list {
            scratch.marked[s as usize] = false;
        }
        scratch.marked_list.clear();

        for ri in 0..scratch.route_list.len() {
            let r = scratch.route_list[ri];
            let from = scratch.route_from[r as usize] as usize;
            scratch.route_from[r as usize] = NONE;
            let route = &net.routes[r as usize];
            let mut trip: Option<usize> = None;
            for pos in from..route.stops.len() {
                let s = route.stops[pos] as usize;
                if let Some(t) = trip {
                    let a = route.trips[t].arr[pos] as f64;
                    if a < scratch.arrival[s] {
                        scratch.arrival[s] = a;
                        if !scratch.arrived[s] {
                            scratch.arrived[s] = true;
                            scratch.arrived_list.push(s as u32);
                        }
                    }
                }
                let ready = scratch.ready[s];
                if ready.is_finite() {
                    let can_improve = match trip {
                        None => true,
                        Some(t) => ready <= route.trips[t].dep[pos] as f64,
                    };
                    if can_improve {
                        // trips are sorted by departure at every position
                        let limit = trip.unwrap_or(route.trips.len());
                        let k = route.trips[..limit].partition_point(|tt| (tt.dep[pos] as f64) < ready);
                        if k < limit {
                            trip = Some(k);
                        }
                    }
                }
            }
        }
        scratch.route_list.clear();

        // transfers out of stops reached by vehicle this round
        let arrived = std::mem::take(&mut scratch.arrived_list);
        for &s in &arrived {
            scratch.arrived[s as usize] = false;
            let base = scratch.arrival[s as usize] + min_transfer_s;
            if base < scratch.ready[s as usize] {
                scratch.ready[s as usize] = base;
                scratch.mark(s);
            }
            for &(q, w) in &net.transfers[s as usize] {
                let t = base + w;
                if t < scratch.ready[q as usize] {
                    scratch.ready[q as usize] = t;
                    scratch.mark(q);
                }
            }
        }
        scratch.arrived_list = arrived;
        scratch.arrived_list.clear();
    }
}
