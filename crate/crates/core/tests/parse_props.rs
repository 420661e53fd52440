use pite_core::parse_tree::{extract_lowest_np, parse_bracketed, Span};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Gen {
    Word(String),
    Node(String, Vec<Gen>),
}

impl Gen {
    fn render(&self) -> String {
        match self {
            Gen::Word(w) => w.clone(),
            Gen::Node(l, kids) => {
                let inner: Vec<String> = kids.iter().map(Gen::render).collect();
                format!("({l} {})", inner.join(" "))
            }
        }
    }

    fn has_np(&self) -> bool {
        match self {
            Gen::Word(_) => false,
            Gen::Node(l, kids) => l == "NP" || kids.iter().any(Gen::has_np),
        }
    }

    fn words(&self, out: &mut Vec<String>) {
        match self {
            Gen::Word(w) => out.push(w.clone()),
            Gen::Node(_, kids) => kids.iter().for_each(|k| k.words(out)),
        }
    }

    /// Straight recursive oracle: NP nodes without NP below, with spans.
    fn lowest(&self, start: usize, out: &mut Vec<(String, Span)>) -> usize {
        match self {
            Gen::Word(_) => start + 1,
            Gen::Node(l, kids) => {
                let below = kids.iter().any(Gen::has_np);
                let mut pos = start;
                for k in kids {
                    pos = k.lowest(pos, out);
                }
                if l == "NP" && !below {
                    let mut w = Vec::new();
                    self.words(&mut w);
                    out.push((w.join(" "), Span::new(start, pos)));
                }
                pos
            }
        }
    }
}

fn tree() -> impl Strategy<Value = Gen> {
    let word = prop::sample::select(vec!["a", "dog", "the", "red", "ball", "runs", "on", "grass"])
        .prop_map(|w| Gen::Word(w.to_string()));
    let label = prop::sample::select(vec!["NP", "NP", "VP", "PP", "S", "NN", "NP-SBJ"]);
    word.prop_recursive(5, 40, 4, move |inner| {
        (label.clone(), prop::collection::vec(inner, 1..4))
            .prop_map(|(l, kids)| Gen::Node(l.to_string(), kids))
    })
    .prop_map(|g| match g {
        w @ Gen::Word(_) => Gen::Node("TOP".into(), vec![Gen::Node("NN".into(), vec![w])]),
        n => Gen::Node("TOP".into(), vec![n]),
    })
}

proptest! {
    #[test]
    fn matches_recursive_oracle(g in tree()) {
        let t = parse_bracketed(&g.render()).unwrap();
        let mut expected = Vec::new();
        g.lowest(0, &mut expected);
        let got: Vec<(String, Span)> =
            extract_lowest_np(&t).into_iter().map(|n| (n.text, n.span)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn spans_ordered_disjoint_and_np_free(g in tree()) {
        let t = parse_bracketed(&g.render()).unwrap();
        let nps = extract_lowest_np(&t);
        for w in nps.windows(2) {
            prop_assert!(w[0].span.hi <= w[1].span.lo);
        }
        let leaves = t.leaves();
        for (np, node) in nps.iter().zip(t.lowest_np_nodes()) {
            prop_assert_eq!(&np.text, &leaves[np.span.lo..np.span.hi].join(" "));
            prop_assert!(node.children().iter().all(|c| c.lowest_np_nodes().is_empty()));
        }
    }

    #[test]
    fn round_trip_and_idempotence(g in tree()) {
        let t = parse_bracketed(&g.render()).unwrap();
        let again = parse_bracketed(&t.to_bracketed()).unwrap();
        prop_assert_eq!(&again, &t);
        prop_assert_eq!(extract_lowest_np(&t), extract_lowest_np(&again));
        prop_assert_eq!(t.to_string(), again.to_string());
    }
}
