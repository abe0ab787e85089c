//! Extraction against brute-force and simulator oracles.

use minimap_oracle::image::{FrameImage, GrayImage};
use minimap_oracle::map::{MapSpec, Roster};
use minimap_oracle::rng::SeededRng;
use minimap_oracle::synth::{simulate_round, video_len, FrameState, Hud, Renderer, SimConfig};
use minimap_oracle::types::{EventKind, Outcome};
use minimap_oracle::vision::{
    infer_events, match_agents, match_events, ncc_match, segment_rounds, Detection, Extractor, IconKind,
    MatchCounts, Region, SegmentConfig, VisionConfig,
};
use proptest::prelude::*;

fn extractor(prune: bool) -> Extractor {
    let config = VisionConfig { prune_candidates: prune, ..VisionConfig::default() };
    Extractor::new(MapSpec::split6(), Roster::default(), config)
}

fn gray(w: usize, h: usize, rng: &mut SeededRng) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.uniform()).collect())
}

/// Literal double loop over offsets, best score first, first offset on ties.
fn brute_force(t: &GrayImage, img: &GrayImage) -> ((usize, usize), f64) {
    let n = (t.width * t.height) as f64;
    let mt: f64 = t.data.iter().sum::<f64>() / n;
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for y in 0..=img.height - t.height {
        for x in 0..=img.width - t.width {
            let mut mi = 0.0;
            for j in 0..t.height {
                for i in 0..t.width {
                    mi += img.at(x + i, y + j);
                }
            }
            mi /= n;
            let (mut num, mut st, mut si) = (0.0, 0.0, 0.0);
            for j in 0..t.height {
                for i in 0..t.width {
                    let (a, b) = (t.at(i, j) - mt, img.at(x + i, y + j) - mi);
                    num += a * b;
                    st += a * a;
                    si += b * b;
                }
            }
            let s = if st * si > 0.0 { num / (st * si).sqrt() } else { 0.0 };
            if s > best.1 {
                best = ((x, y), s);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ncc_argmax_matches_double_loop(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let img = gray(32, 32, &mut rng);
        let t = gray(8, 8, &mut rng);
        let m = ncc_match(&t, &img, Region::whole(&img)).unwrap();
        let (xy, s) = brute_force(&t, &img);
        prop_assert_eq!((m.x, m.y), xy);
        prop_assert!((m.score - s).abs() < 1e-9);
    }

    #[test]
    fn ncc_is_invariant_to_affine_intensity(seed in any::<u64>(), a in 0.05f64..20.0, b in -5.0f64..5.0) {
        let mut rng = SeededRng::new(seed);
        let img = gray(24, 20, &mut rng);
        let t = gray(6, 5, &mut rng);
        let moved = GrayImage::new(img.width, img.height, img.data.iter().map(|v| a * v + b).collect());
        let (p, q) = (ncc_match(&t, &img, Region::whole(&img)).unwrap(), ncc_match(&t, &moved, Region::whole(&moved)).unwrap());
        prop_assert_eq!((p.x, p.y), (q.x, q.y));
        prop_assert!((p.score - q.score).abs() < 1e-9);
    }

    /// Back-to-back countdown rounds with random lengths come out sorted, disjoint and capped.
    #[test]
    fn segmented_rounds_are_sorted_disjoint_and_capped(lens in prop::collection::vec(1u32..=100, 1..5), gap in 0usize..20) {
        let fps = 4;
        let mut readings = Vec::new();
        let mut banners = Vec::new();
        let mut starts = Vec::new();
        for &len in &lens {
            readings.extend(std::iter::repeat_n(None, gap));
            banners.extend(std::iter::repeat_n(None, gap));
            starts.push(readings.len());
            for s in (101 - len..=100).rev() {
                readings.extend(std::iter::repeat_n(Some(s), fps));
                banners.extend(std::iter::repeat_n(None, fps));
            }
            readings.extend(std::iter::repeat_n(None, 8));
            banners.extend(std::iter::repeat_n(Some(Outcome::AttackerWin), 8));
        }
        let b = segment_rounds(&readings, &banners, &SegmentConfig::new(fps), "m");
        prop_assert_eq!(b.len(), lens.len());
        for (k, r) in b.iter().enumerate() {
            prop_assert_eq!(r.start_frame, starts[k]);
            prop_assert_eq!(r.end_frame, starts[k] + lens[k] as usize * fps);
            prop_assert!(r.end_frame - r.start_frame <= 100 * fps);
        }
        prop_assert!(b.windows(2).all(|w| w[0].end_frame <= w[1].start_frame));
    }
}

#[test]
fn two_rounds_back_to_back_without_banners_or_gap() {
    let fps = 4;
    let mut readings = Vec::new();
    for _ in 0..2 {
        for s in (40..=100).rev() {
            readings.extend(std::iter::repeat_n(Some(s), fps));
        }
    }
    readings.extend(std::iter::repeat_n(Some(0), 10));
    let b = segment_rounds(&readings, &vec![None; readings.len()], &SegmentConfig::new(fps), "m");
    // The first round resets to the full clock without an outcome and is dropped;
    // the second runs out of time and goes to the defenders.
    assert_eq!(b.iter().map(|r| (r.start_frame, r.end_frame, r.outcome)).collect::<Vec<_>>(), vec![(244, 488, Outcome::DefenderWin)]);

    let mut readings = Vec::new();
    let mut banners = Vec::new();
    for o in [Outcome::AttackerWin, Outcome::DefenderWin] {
        for s in (90..=100).rev() {
            readings.extend(std::iter::repeat_n(Some(s), fps));
            banners.extend(std::iter::repeat_n(None, fps));
        }
        readings.push(None);
        banners.push(Some(o));
    }
    let b = segment_rounds(&readings, &banners, &SegmentConfig::new(fps), "m");
    assert_eq!(b.iter().map(|r| (r.start_frame, r.end_frame, r.outcome)).collect::<Vec<_>>(), vec![
        (0, 44, Outcome::AttackerWin),
        (45, 89, Outcome::DefenderWin)
    ]);
}

#[test]
fn long_mid_round_dropout_discards_the_round() {
    let fps = 4;
    let mut readings: Vec<Option<u32>> = (50..=100).rev().flat_map(|s| std::iter::repeat_n(Some(s), fps)).collect();
    readings.splice(40..40, std::iter::repeat_n(None, 3 * fps));
    let mut banners = vec![None; readings.len()];
    banners.push(Some(Outcome::AttackerWin));
    readings.push(None);
    assert!(segment_rounds(&readings, &banners, &SegmentConfig::new(fps), "m").is_empty());
}

#[test]
fn one_icon_one_detection_and_empty_playfield_none() {
    let cfg = SimConfig::default();
    let r = Renderer::new(&cfg.map, &cfg.roster);
    let ex = extractor(true);
    assert!(ex.detect(&r.frame(None, Hud::Timer(50))).is_empty());
    let n = cfg.roster.len();
    for a in 0..n {
        let mut agents = vec![None; n];
        agents[a] = Some((40 + 3 * a as i32, 70));
        let st = FrameState { agents, ..FrameState::default() };
        let d = ex.detect(&r.frame(Some(&st), Hud::Timer(50)));
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].kind, d[0].agent, d[0].x, d[0].y), (IconKind::Agent, Some(a), 40 + 3 * a as i32, 70));
    }
}

/// Pruned candidate search finds the same icons as scanning every offset.
#[test]
fn pruned_and_exhaustive_detection_agree() {
    let cfg = SimConfig::default();
    let r = Renderer::new(&cfg.map, &cfg.roster);
    let (fast, slow) = (extractor(true), extractor(false));
    for seed in 0..4u64 {
        let g = simulate_round(&cfg, seed);
        for f in (0..g.n_frames).step_by(g.n_frames / 3 + 1) {
            let img = r.round_frame(&g, &cfg, f);
            let key = |d: &Detection| (d.kind as u8, d.agent, d.x, d.y);
            let mut a: Vec<_> = fast.detect(&img).iter().map(key).collect();
            let mut b: Vec<_> = slow.detect(&img).iter().map(key).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b, "seed {seed} frame {f}");
        }
    }
}

#[test]
fn agent_detection_precision_and_recall() {
    let cfg = SimConfig::default();
    let r = Renderer::new(&cfg.map, &cfg.roster);
    let ex = extractor(true);
    let mut total = MatchCounts::default();
    let mut frames = 0;
    for seed in 0..40u64 {
        let g = simulate_round(&cfg, 1000 + seed);
        // Early frames, when all ten agents are still alive.
        for f in [0, g.n_frames.min(40) - 1, g.n_frames.min(80) - 1] {
            total.add(match_agents(&ex.detect(&r.round_frame(&g, &cfg, f)), &g.frames[f].agents, 1));
            frames += 1;
        }
    }
    assert!(frames >= 100);
    assert!(total.precision() >= 0.99 && total.recall() >= 0.99, "{total:?}");
}

#[test]
fn stationary_enemy_is_silent_and_a_runner_is_heard_once_per_second() {
    let map = MapSpec::split6();
    let roster = Roster::default();
    let fps = 8;
    let rule = VisionConfig::default().footstep_rule(&map);
    let (attacker, defender) = (0usize, 5usize);
    let det = |agent: usize, x: i32, y: i32| Detection {
        kind: IconKind::Agent,
        agent: Some(agent),
        team: Some(roster.team_of(agent)),
        x,
        y,
        score: 1.0,
    };
    let still: Vec<Vec<Detection>> = (0..16).map(|_| vec![det(attacker, 60, 60), det(defender, 70, 60)]).collect();
    assert!(infer_events(&still, &map, &roster, rule, fps).events.is_empty());

    // The defender runs 3 px/frame past the attacker for one second.
    let step = (rule.v_min.ceil() as i32).max(2) + 1;
    let run: Vec<Vec<Detection>> =
        (0..fps as i32).map(|k| vec![det(attacker, 60, 60), det(defender, 50 + step * k, 62)]).collect();
    let ev = infer_events(&run, &map, &roster, rule, fps).events;
    assert_eq!(ev.len(), 1, "{ev:?}");
    assert_eq!((ev[0].kind, ev[0].agent.as_str()), (EventKind::FootstepHeard, roster.agents[defender].name.as_str()));
}

#[test]
fn skill_icon_present_frames_40_to_60_is_one_event_at_40() {
    let map = MapSpec::split6();
    let roster = Roster::default();
    let skill = Detection { kind: IconKind::Skill, agent: Some(2), team: Some(roster.team_of(2)), x: 64, y: 64, score: 1.0 };
    let dets: Vec<Vec<Detection>> = (0..80).map(|f| if (40..=60).contains(&f) { vec![skill] } else { vec![] }).collect();
    let ev = infer_events(&dets, &map, &roster, VisionConfig::default().footstep_rule(&map), 8).events;
    assert_eq!(ev.len(), 1);
    assert_eq!((ev[0].kind, ev[0].t), (EventKind::SkillUse, 5.0));
}

#[test]
fn end_to_end_event_f1_and_boundaries() {
    let cfg = SimConfig { seed: 77, ..SimConfig::default() };
    let r = Renderer::new(&cfg.map, &cfg.roster);
    let ex = extractor(true);
    let mut counts = MatchCounts::default();
    for i in 0..12 {
        let g = simulate_round(&cfg, minimap_oracle::synth::round_seed(cfg.seed, i));
        let frames: Vec<FrameImage> = (0..video_len(&g, &cfg)).map(|k| r.video_frame(&g, &cfg, k)).collect();
        let rounds = ex.extract_video(&ex.observe_all(&frames), "v");
        assert_eq!(rounds.len(), 1);
        let b = &rounds[0].boundary;
        assert!(b.start_frame.abs_diff(cfg.lead_in_frames) <= 1);
        assert!(b.end_frame.abs_diff(cfg.lead_in_frames + g.n_frames) <= 1);
        assert_eq!(b.outcome, g.outcome);
        counts.add(match_events(&rounds[0].events, &g.events, 1.0 / cfg.fps as f64));
    }
    assert!(counts.f1() >= 0.95, "{counts:?}");
}
