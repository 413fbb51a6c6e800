use std::sync::Arc;

use proptest::prelude::*;

use broadsheet::association::{associate, AssociationConfig};
use broadsheet::domain::{BoundingBox, ContentClass, ContentRegion, LegibilityClass, PageScan};
use broadsheet::geometry::{self, Detection, GeometryConfig, Label};
use broadsheet::lexicon::{non_word_rate, Lexicon, Provenance};
use broadsheet::pipeline::boundary::StubScan;
use broadsheet::recognition::{RecognitionConfig, Recognizer};
use broadsheet::testkit::{BlockSpec, Corpus, PageSpec};

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (0.0..1000.0f64, 0.0..1000.0f64, 1.0..300.0f64, 1.0..300.0f64).prop_map(|(x, y, w, h)| BoundingBox {
        x0: x,
        y0: y,
        x1: x + w,
        y1: y + h,
    })
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Line), Just(Label::Word), Just(Label::Region(ContentClass::Article))]
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((bbox(), label(), 0.0..1.0f64).prop_map(|(b, l, s)| Detection::new(b, l, s)), 0..30)
}

fn grid_region(id: String, class: ContentClass, x: u16, y: u16, w: u16, h: u16, conf: u16) -> ContentRegion {
    let (x, y) = (x as f64, y as f64);
    ContentRegion {
        id,
        bbox: BoundingBox { x0: x, y0: y, x1: x + w as f64, y1: y + h as f64 },
        class,
        confidence: conf as f64 / 1000.0,
        legibility: Some(LegibilityClass::Legible),
        lines: vec![],
        text: Some("t".into()),
    }
}

fn page(regions: Vec<ContentRegion>) -> PageScan {
    PageScan {
        scan_id: "p".into(),
        lccn: "sn1".into(),
        date: "1900-01-01".into(),
        edition: 1,
        page_number: 1,
        width_px: 1000,
        height_px: 1000,
        regions,
    }
}

fn layout() -> impl Strategy<Value = PageScan> {
    let class =
        prop_oneof![Just(ContentClass::Article), Just(ContentClass::Headline), Just(ContentClass::Byline), Just(ContentClass::Caption)];
    prop::collection::vec((class, 0u16..900, 0u16..900, 10u16..400, 10u16..400, 0u16..=1000), 1..12).prop_map(|rs| {
        page(rs.into_iter().enumerate().map(|(i, (c, x, y, w, h, conf))| grid_region(format!("r{i}"), c, x, y, w, h, conf)).collect())
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let (ab, ba) = (geometry::iou(&a, &b), geometry::iou(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((geometry::iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nms_is_idempotent_and_suppresses_overlaps(dets in detections(), t in 0.05..0.95f64) {
        let kept = geometry::nms(&dets, t);
        prop_assert_eq!(geometry::nms(&kept, t), kept.clone());
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(dets.contains(a));
            for b in &kept[i + 1..] {
                prop_assert!(a.label != b.label || geometry::iou(&a.bbox, &b.bbox) <= t);
            }
        }
    }

    #[test]
    fn splits_cover_the_input(r in bbox(), tall in 1.0..4.0f64, wide in 5.0..40.0f64) {
        let cfg = GeometryConfig { tall_ratio: tall, wide_ratio: wide, ..Default::default() };
        let windows = geometry::split_tall_region(&r, &cfg);
        prop_assert_eq!(windows[0].y0, r.y0);
        prop_assert_eq!(windows.last().unwrap().y1, r.y1);
        for w in windows.windows(2) {
            prop_assert!(w[1].y0 <= w[0].y1);
        }
        let segs = geometry::split_wide_line(&r, &cfg);
        prop_assert_eq!(segs[0].x0, r.x0);
        prop_assert_eq!(segs.last().unwrap().x1, r.x1);
        for s in segs.windows(2) {
            prop_assert!(s[1].x0 <= s[0].x1);
        }
    }

    #[test]
    fn page_scan_json_round_trip(p in layout()) {
        let json = serde_json::to_string(&p).unwrap();
        let back: PageScan = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn growing_the_lexicon_never_raises_non_word_rate(
        words in prop::collection::vec("[a-e]{1,4}", 1..30),
        known in prop::collection::vec("[a-e]{1,4}", 0..20),
        extra in "[a-e]{1,4}",
    ) {
        let text = words.join(" ");
        let mut lex = Lexicon::new();
        for k in &known {
            lex.insert(k.clone(), Provenance::Modern, 1);
        }
        let before = non_word_rate(&text, &lex);
        lex.insert(extra, Provenance::Extra, 1);
        prop_assert!(non_word_rate(&text, &lex) <= before);
    }

    #[test]
    fn association_ignores_region_order(p in layout(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = p.clone();
        shuffled.regions.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cfg = AssociationConfig::default();
        let (a, b) = (associate(&p, &cfg), associate(&shuffled, &cfg));
        prop_assert_eq!(a.headline_links, b.headline_links);
        prop_assert_eq!(a.byline_links, b.byline_links);
        prop_assert_eq!(a.articles, b.articles);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decode_line_ignores_detection_order(words in prop::collection::vec("[a-z]{1,6}", 1..8), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let line = words.join(" ");
        let spec = PageSpec::new("line", 1, vec![BlockSpec::text(ContentClass::Article, 10.0, 10.0, &[line.as_str()])]);
        let mut corpus = Corpus::new(&words, 16, 3);
        let rendered = corpus.render(&spec).unwrap();
        let (wi, ci) = (corpus.word_index(), corpus.char_index());
        let stub = Arc::new(StubScan { fixture: rendered.fixture, embeddings: rendered.embeddings });
        let (cfg, geo) = (RecognitionConfig { embedding_dim: 16, ..Default::default() }, GeometryConfig::default());
        let rec = Recognizer { words: &wi, chars: &ci, encoder: stub.as_ref(), detector: stub.as_ref(), cfg: &cfg, geometry: &geo };
        let line_box = spec.blocks[0].line_box(0);
        let mut dets = rec.line_words("line", &line_box).unwrap();
        let ordered = rec.decode_line("line", &line_box, &dets).unwrap();
        prop_assert_eq!(&ordered.text, &line);
        dets.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = rec.decode_line("line", &line_box, &dets).unwrap();
        prop_assert_eq!(shuffled.text, ordered.text);
        prop_assert_eq!(shuffled.stats, ordered.stats);
    }
}
