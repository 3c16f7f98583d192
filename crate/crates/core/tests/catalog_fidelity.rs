mod common;

use common::{appendix_by_category, appendix_rows};
use dtinterview_core::catalog::{default_catalog, load_catalog, CatalogError, CategoryId, ResolveError};

#[test]
fn category_sizes_match_the_published_table() {
    let catalog = default_catalog();
    let sizes: Vec<(&str, usize)> = catalog
        .categories
        .iter()
        .map(|c| (c.id.as_str(), c.questions.len()))
        .collect();
    assert_eq!(
        sizes,
        [
            ("corporate_governance", 12),
            ("customer_market", 12),
            ("rnd", 10),
            ("supply", 19),
            ("production", 20),
        ]
    );
    assert_eq!(catalog.total_questions(), 73);
}

#[test]
fn every_question_matches_the_table_in_order() {
    let catalog = default_catalog();
    let expected = appendix_by_category();
    assert_eq!(expected.len(), catalog.categories.len());
    for category in &catalog.categories {
        let texts: Vec<&str> = category.questions.iter().map(|q| q.text.as_str()).collect();
        assert_eq!(texts, expected[category.id.as_str()], "category {}", category.id);
    }
    assert_eq!(appendix_rows().len(), catalog.total_questions());
}

#[test]
fn first_questions_and_supply_eighth() {
    let catalog = default_catalog();
    let firsts: Vec<&str> = catalog
        .categories
        .iter()
        .map(|c| c.questions[0].text.as_str())
        .collect();
    assert_eq!(
        firsts,
        [
            "How are management decisions made?",
            "How are sales and marketing activities carried out?",
            "Is there a P&D or R&D department?",
            "Production Planning: How is the planning horizon determined?",
            "How do you forward production work orders to the line?",
        ]
    );
    let supply = catalog.category(&CategoryId::new("supply")).unwrap();
    assert_eq!(
        supply.questions[7].text,
        "Purchase Orders: How is communication with suppliers ensured?"
    );
}

#[test]
fn question_texts_are_unique_across_the_catalog() {
    let catalog = default_catalog();
    let mut texts: Vec<&str> = catalog
        .categories
        .iter()
        .flat_map(|c| c.questions.iter().map(|q| q.text.as_str()))
        .collect();
    texts.sort_unstable();
    let before = texts.len();
    texts.dedup();
    assert_eq!(before, texts.len());
}

#[test]
fn names_resolve_case_insensitively_and_unknown_names_list_valid_ones() {
    let catalog = default_catalog();
    for (name, id) in [
        ("Supply Management", "supply"),
        ("supply chain", "supply"),
        ("R&D", "rnd"),
        ("research and development", "rnd"),
        ("CUSTOMER AND MARKET MANAGEMENT", "customer_market"),
        ("  corporate   governance ", "corporate_governance"),
        ("production_management", "production"),
    ] {
        assert_eq!(catalog.resolve_category(name), Ok(CategoryId::new(id)), "{name}");
    }
    match catalog.resolve_category("marketing magic") {
        Err(e @ ResolveError::NoMatch { .. }) => {
            let message = e.to_string();
            for c in &catalog.categories {
                assert!(message.contains(&c.display_name), "{message}");
            }
        }
        other => panic!("expected NoMatch, got {other:?}"),
    }
}

#[test]
fn duplicate_ids_are_rejected_with_their_location() {
    let doc = r#"{"version":"t","categories":[
        {"id":"a","display_name":"A","questions":[{"id":"q1","text":"one"},{"id":"q1","text":"two"}]}]}"#;
    match load_catalog(doc) {
        Err(CatalogError::DuplicateQuestion { id, location }) => {
            assert_eq!(id, "q1");
            assert!(location.contains("categories[0]"), "{location}");
        }
        other => panic!("expected duplicate question, got {other:?}"),
    }
}

#[test]
fn syntax_errors_carry_a_line_number() {
    let doc = "{\n  \"version\": \"t\",\n  \"categories\": [\n    {\"id\": }\n  ]\n}";
    match load_catalog(doc) {
        Err(CatalogError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected parse error, got {other:?}"),
    }
}

mod generated {
    use dtinterview_core::catalog::load_catalog;
    use proptest::prelude::*;
    use serde_json::json;

    // small alphabet so that collisions between names are common
    fn name() -> impl Strategy<Value = String> {
        "[aB_ -]{1,4}"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn every_loaded_category_resolves_from_each_of_its_names(
            cats in proptest::collection::vec((name(), name(), proptest::collection::vec(name(), 0..3)), 1..5)
        ) {
            let doc = json!({
                "version": "g",
                "categories": cats.iter().enumerate().map(|(i, (id, display, aliases))| json!({
                    "id": id, "display_name": display, "aliases": aliases, "questions": [format!("q{i}")]
                })).collect::<Vec<_>>(),
            });
            if let Ok(catalog) = load_catalog(&doc.to_string()) {
                for c in &catalog.categories {
                    prop_assert_eq!(catalog.resolve_category(c.id.as_str()), Ok(c.id.clone()));
                    prop_assert_eq!(catalog.resolve_category(&c.display_name), Ok(c.id.clone()));
                    for a in &c.aliases {
                        prop_assert_eq!(catalog.resolve_category(a), Ok(c.id.clone()));
                    }
                }
            }
        }
    }
}
