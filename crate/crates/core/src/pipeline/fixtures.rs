//! Built-in travel-budget fixture: a small tool registry, seed samples and a
//! scripted oracle that reproduces the currency-conversion walkthrough.

use serde_json::json;

use super::oracle::{ScriptFile, ScriptRule, ScriptedOracle};
use super::registry::{RegistryFile, ToolRegistry};
use super::synth::SeedSample;
use crate::types::{Context, ToolSpec};
use crate::value::ToolCall;

pub const EXCHANGE_QUERY: &str = "Gearing up for some exciting travel adventures! I wish to put a firm budget in place, setting a cap equivalent to 50,000 RMB for my upcoming European excursions. I'd appreciate if you could take charge of the conversion and establish a budget framework for me using the access token 'abc123xyz'.";

pub const POLICY: &str = "You are a travel assistant. Use the available tools to act on the user's behalf.";

/// Registry file for the fixture tools.
pub fn registry_file() -> RegistryFile {
    serde_json::from_value(json!({
        "compute_exchange_rate": {
            "description": "Convert a value from one currency to another.",
            "params": [
                {"key": "base_currency", "type": "string", "required": true},
                {"key": "target_currency", "type": "string", "required": true},
                {"key": "value", "type": "number", "required": true}
            ],
            "responses": [
                {"args": {"base_currency": "RMB", "target_currency": "USD", "value": 50000}, "response": {"exchanged_value": 7142.86}}
            ],
            "default": {"exchanged_value": 108.5}
        },
        "set_budget_limit": {
            "description": "Set the travel budget limit in USD.",
            "params": [
                {"key": "access_token", "type": "string", "required": true},
                {"key": "budget_limit", "type": "number", "required": true}
            ],
            "default": {"status": "success"}
        },
        "get_weather": {
            "description": "Current weather for a city.",
            "params": [{"key": "city", "type": "string", "required": true}],
            "responses": [
                {"args": {"city": "Paris"}, "response": {"city": "Paris", "temp_c": 18, "sky": "cloudy"}},
                {"args": {"city": "Tokyo"}, "response": {"city": "Tokyo", "temp_c": 24, "sky": "clear"}}
            ],
            "default": {"temp_c": 20, "sky": "clear"}
        },
        "get_flight_cost": {
            "description": "Cheapest economy fare in USD between two airports.",
            "params": [
                {"key": "origin", "type": "string", "required": true},
                {"key": "destination", "type": "string", "required": true}
            ],
            "default": {"cost": 420.0}
        }
    }))
    .expect("fixture registry is valid")
}

pub fn exchange_rate_registry() -> ToolRegistry {
    ToolRegistry::from_file(registry_file()).expect("fixture registry validates")
}

fn tools() -> Vec<ToolSpec> {
    exchange_rate_registry().specs().cloned().collect()
}

fn sample(id: &str, query: &str, reference: Vec<ToolCall>, answer_text: Option<&str>) -> SeedSample {
    SeedSample {
        id: id.to_string(),
        context: Context {
            policy: POLICY.to_string(),
            tools: tools(),
            history: Vec::new(),
            query: query.to_string(),
        },
        reference,
        answer_text: answer_text.map(str::to_string),
    }
}

pub fn exchange_rate_reference() -> Vec<ToolCall> {
    vec![
        ToolCall::build(
            "compute_exchange_rate",
            [("base_currency", json!("RMB")), ("target_currency", json!("USD")), ("value", json!(50000))],
        ),
        ToolCall::build("set_budget_limit", [("access_token", json!("abc123xyz")), ("budget_limit", json!(7142.86))]),
    ]
}

pub fn exchange_rate_seed() -> SeedSample {
    sample("exchange-rate", EXCHANGE_QUERY, exchange_rate_reference(), None)
}

fn weather(city: &str) -> ToolCall {
    ToolCall::build("get_weather", [("city", city)])
}

/// Ten samples covering the three scenarios.
pub fn demo_batch() -> Vec<SeedSample> {
    vec![
        exchange_rate_seed(),
        sample(
            "weather-paris-tokyo",
            "What is the weather in Paris and Tokyo right now?",
            vec![weather("Paris"), weather("Tokyo")],
            None,
        ),
        sample(
            "greeting",
            "Hi there! How are you today?",
            vec![],
            Some("I'm doing well, thanks for asking! How can I help with your travel plans?"),
        ),
        sample("weather-london", "How is the weather in London?", vec![weather("London")], None),
        sample(
            "flight-budget",
            "Find the fare from SFO to JFK and set my budget to that amount. My token is tok-9.",
            vec![
                ToolCall::build("get_flight_cost", [("origin", "SFO"), ("destination", "JFK")]),
                ToolCall::build("set_budget_limit", [("access_token", json!("tok-9")), ("budget_limit", json!(420.0))]),
            ],
            None,
        ),
        sample("arithmetic", "What is 2 + 2?", vec![], Some("2 + 2 = 4.")),
        sample("weather-tokyo", "Is it sunny in Tokyo?", vec![weather("Tokyo")], None),
        sample(
            "eur-budget",
            "Convert 100 EUR to USD and use it as my budget, token 'eu-77'.",
            vec![
                ToolCall::build(
                    "compute_exchange_rate",
                    [("base_currency", json!("EUR")), ("target_currency", json!("USD")), ("value", json!(100))],
                ),
                ToolCall::build("set_budget_limit", [("access_token", json!("eu-77")), ("budget_limit", json!(108.5))]),
            ],
            None,
        ),
        sample(
            "weather-london-berlin",
            "Give me the weather in London and Berlin.",
            vec![weather("London"), weather("Berlin")],
            None,
        ),
        sample("joke", "Tell me a joke about airports.", vec![], Some("Why did the airport break up with the plane? It needed more space.")),
    ]
}

const DECOMPOSE: &str = "You are a task decomposition expert.";

/// Rules for the walkthrough and the parallel samples. Every other prompt
/// falls back to the reference-driven responder.
pub fn fixture_script() -> ScriptFile {
    let exchange_plan = json!({
        "scenario": "sequential",
        "subtasks": [
            {"step": 1, "description": "Use the 'compute_exchange_rate' tool to convert 50,000 RMB to USD for budget setting, specifying 'RMB' as base currency and 'USD' as target currency."},
            {"step": 2, "description": "Use the 'set_budget_limit' tool to establish the converted USD amount as the budget framework using the provided access token 'abc123xyz'."}
        ]
    });
    let parallel = |a: &str, b: &str| {
        json!({
            "scenario": "parallel",
            "subtasks": [
                {"step": 1, "description": format!("Call [get_weather(city=\"{a}\")]")},
                {"step": 2, "description": format!("Call [get_weather(city=\"{b}\")]")}
            ]
        })
        .to_string()
    };
    let rules = vec![
        ScriptRule {
            when: vec![DECOMPOSE.into(), "50,000 RMB".into()],
            response: exchange_plan.to_string(),
        },
        ScriptRule {
            when: vec![DECOMPOSE.into(), "Paris and Tokyo".into()],
            response: parallel("Paris", "Tokyo"),
        },
        ScriptRule {
            when: vec![DECOMPOSE.into(), "London and Berlin".into()],
            response: parallel("London", "Berlin"),
        },
        ScriptRule {
            when: vec!["Current subtask 1:".into(), "convert 50,000 RMB to USD".into()],
            response: "<think>\nThe user wants to convert 50,000 RMB to USD using the compute_exchange_rate tool. The tool needs base_currency, target_currency, and value. The user specified RMB as the base and USD as the target, with a value of 50,000. Let me make sure the parameters are correctly formatted: base_currency is 'RMB', target_currency is 'USD', and value is 50000.\n</think>\n\n[compute_exchange_rate(base_currency=\"RMB\", target_currency=\"USD\", value=50000)]".into(),
        },
        ScriptRule {
            when: vec!["Current subtask 2:".into(), "converted USD amount".into()],
            response: "<think>\nThe exchange rate tool returned {{obs.exchanged_value}} USD for 50,000 RMB. The required parameters for set_budget_limit are access_token and budget_limit. The user provided the access token 'abc123xyz' and the converted value is {{obs.exchanged_value}}, which is a float.\n</think>\n\n[set_budget_limit(access_token=\"abc123xyz\", budget_limit={{obs.exchanged_value}})]".into(),
        },
    ];
    ScriptFile {
        rules,
        ..ScriptFile::default()
    }
}

pub fn fixture_oracle(seed: u64) -> ScriptedOracle {
    ScriptedOracle::new(fixture_script(), seed)
}
