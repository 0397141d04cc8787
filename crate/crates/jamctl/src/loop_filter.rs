//! Recognizer-in-the-loop observation filter: each CPI, synthesize one
//! composite echo matching the jammer's current emission, classify it, and
//! substitute the predicted class for the ground-truth one-hot in the
//! agent's observation.

use jamlab_core::agent::ObservationFilter;
use jamlab_core::env::{EnvState, JamPlan};
use jamlab_core::recognizer::{scene_features, FeatureParams, Recognizer};
use jamlab_core::seeds;
use jamlab_core::signal::{
    synth_scene, FalseTarget, JammingKind, JammingSpec, RadarParams, SampleRanges,
};
use rand::Rng;

pub struct RecognizerFilter {
    model: Recognizer,
    fp: FeatureParams,
    radar: RadarParams,
    ranges: SampleRanges,
    seed: u64,
    counter: u64,
}

impl RecognizerFilter {
    pub fn new(
        model: Recognizer,
        fp: FeatureParams,
        radar: RadarParams,
        ranges: SampleRanges,
        seed: u64,
    ) -> Self {
        RecognizerFilter {
            model,
            fp,
            radar,
            ranges,
            seed,
            counter: 0,
        }
    }

    /// Build a scene spec matching the emission. The receiver rides the
    /// channel the jammer aimed at, so the baseband offset is zero; the AJ
    /// bandwidth is clipped to what the receive bandwidth can represent.
    fn spec_for_plan(&self, plan: &JamPlan, rng: &mut impl Rng) -> (JammingSpec, f64) {
        let carrier = self.radar.carrier_hz;
        let jnr = plan.jnr_db;
        match plan.kind {
            JammingKind::Aj => {
                let err = rng
                    .gen_range(self.ranges.aj_center_error_hz.0..=self.ranges.aj_center_error_hz.1);
                let max_bw = 0.9 * self.radar.sample_rate_hz - 2.0 * err.abs();
                let bw = plan.bandwidth_hz.min(max_bw);
                let target = rng
                    .gen_range(self.ranges.target_delay_s.0..=self.ranges.target_delay_s.1);
                (JammingSpec::aj(jnr, carrier + err, bw), target)
            }
            JammingKind::Rftj => {
                let delay = rng.gen_range(self.ranges.rftj_delay_s.0..=self.ranges.rftj_delay_s.1);
                let doppler = rng.gen_range(self.ranges.doppler_hz.0..=self.ranges.doppler_hz.1);
                let target = rng
                    .gen_range(self.ranges.target_delay_s.0..=self.ranges.target_delay_s.1);
                (JammingSpec::rftj(jnr, carrier, delay, doppler), target)
            }
            JammingKind::Rdftj => {
                let k = plan.false_targets.max(1);
                let targets = (0..k)
                    .map(|_| FalseTarget {
                        delay_s: rng
                            .gen_range(self.ranges.rdftj_delay_s.0..=self.ranges.rdftj_delay_s.1),
                        doppler_hz: rng
                            .gen_range(self.ranges.doppler_hz.0..=self.ranges.doppler_hz.1),
                        amplitude: 1.0,
                    })
                    .collect();
                let target = rng.gen_range(
                    self.ranges.rdftj_target_delay_s.0..=self.ranges.rdftj_target_delay_s.1,
                );
                (JammingSpec::rdftj(jnr, carrier, targets), target)
            }
        }
    }
}

impl ObservationFilter for RecognizerFilter {
    fn filter(&mut self, plan: &JamPlan, obs: EnvState) -> EnvState {
        self.counter += 1;
        let scene_seed = seeds::child_seed(self.seed, 0xec0e, self.counter);
        let mut rng = seeds::rng_from_seed(seeds::child_seed(scene_seed, 0x5bec, 0));
        let (spec, target_delay) = self.spec_for_plan(plan, &mut rng);
        let prediction = synth_scene(&self.radar, &spec, target_delay, scene_seed)
            .and_then(|scene| scene_features(&scene.composite, &self.fp))
            .and_then(|f| self.model.predict(&[f]));
        match prediction {
            Ok(preds) => obs.with_recognized(preds[0]),
            // Synthesis can only fail on malformed parameters; fall back to
            // the oracle label rather than poisoning the run.
            Err(_) => obs,
        }
    }
}
