use proptest::prelude::*;

/// Random tree as edge text: node `i > 0` hangs under a node with a smaller index.
pub(crate) fn arb_tree(max_nodes: usize) -> impl Strategy<Value = String> {
    (2..=max_nodes)
        .prop_flat_map(|n| proptest::collection::vec(any::<prop::sample::Index>(), n - 1))
        .prop_map(|picks| {
            let mut text = String::new();
            for (i, pick) in picks.iter().enumerate() {
                let child = i + 1;
                text.push_str(&format!("n{child} n{}\n", pick.index(child)));
            }
            text
        })
}
