//! Domain vocabularies for the corpus generator.
//!
//! Each theme owns a label vocabulary that no other theme uses; sites in the
//! same domain draw from the same theme. Words shared by every site (page
//! chrome, instruction templates, names) live in the `CHROME_*` and
//! `TEMPLATE_*` tables and are kept out of every theme.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub(crate) struct Concept {
    /// Word used in instructions.
    pub name: String,
    /// Candidate nav labels; each site picks one.
    pub synonyms: Vec<String>,
    pub field: String,
    pub placeholder: String,
    pub select_label: String,
    pub options: Vec<String>,
    pub items: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Theme {
    pub domain: String,
    pub site_prefixes: Vec<String>,
    pub site_suffixes: Vec<String>,
    pub concepts: Vec<Concept>,
    /// Values typed into search fields.
    pub values: Vec<String>,
    /// Button labels; each site assigns three of them to the submit,
    /// reserve and confirm roles.
    pub actions: Vec<String>,
    pub filler: Vec<String>,
}

pub(crate) const CHROME_HOME: &str = "home";
pub(crate) const CHROME_LINKS: [(&str, &str); 3] = [("about us", "about"), ("help", "help"), ("login", "login")];
pub(crate) const CHROME_NAME_FIELD: &str = "full name";
pub(crate) const CHROME_QTY_FIELD: &str = "quantity";
pub(crate) const CHROME_CODE_FIELD: &str = "promo code";
pub(crate) const CHROME_QTY_OPTIONS: [&str; 4] = ["one", "two", "three", "four"];
pub(crate) const CHROME_NOTICE: &str = "this option is unavailable";
pub(crate) const CHROME_DONE: &str = "thank you your request is complete";
pub(crate) const CHROME_WELCOME: &str = "welcome";

pub(crate) const NAMES: [&str; 12] = [
    "alice", "bruno", "chen", "dana", "emil", "farah", "gita", "hugo", "ines", "jonas", "kemal", "lena",
];
pub(crate) const CODES: [&str; 8] = [
    "zx100", "qv200", "km300", "tr400", "wb500", "ny600", "pl700", "hd800",
];

pub(crate) const TEMPLATE_NAV: [&str; 5] = [
    "open the {c} page",
    "go to {c}",
    "show me {c}",
    "take me to the {c} section",
    "browse {c}",
];
pub(crate) const TEMPLATE_SEARCH: [&str; 5] = [
    "search {c} for {v}",
    "find {c} for {v}",
    "look up {c} for {v}",
    "i need {c} for {v}",
    "show me {c} for {v}",
];
pub(crate) const TEMPLATE_FILTER: [&str; 3] = [" with {o}", " using {o}", " filtered by {o}"];
pub(crate) const TEMPLATE_DETAIL: [&str; 3] = [" and open {i}", " then view {i}", " and check {i}"];
pub(crate) const TEMPLATE_BOOK: [&str; 2] = [" then complete it for {n}", " and finish as {n}"];
pub(crate) const TEMPLATE_FULL: [&str; 2] = [" with {q} and code {k}", " taking {q} plus code {k}"];

fn s(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| (*w).to_owned()).collect()
}

#[allow(clippy::too_many_arguments)]
fn concept(
    name: &str,
    synonyms: [&str; 3],
    field: &str,
    placeholder: &str,
    select_label: &str,
    options: [&str; 4],
    items: [&str; 4],
) -> Concept {
    Concept {
        name: name.to_owned(),
        synonyms: s(&synonyms),
        field: field.to_owned(),
        placeholder: placeholder.to_owned(),
        select_label: select_label.to_owned(),
        options: s(&options),
        items: s(&items),
    }
}

fn curated() -> Vec<Theme> {
    vec![
        Theme {
            domain: "travel".into(),
            site_prefixes: s(&["sky", "jet", "voya", "wander", "globe"]),
            site_suffixes: s(&["hop", "ly", "port", "trek"]),
            concepts: vec![
                concept(
                    "flights",
                    ["flights", "air travel", "plane tickets"],
                    "destination",
                    "arrival airport",
                    "cabin",
                    ["economy", "premium", "business", "first class"],
                    ["nonstop route", "red eye", "morning departure", "evening departure"],
                ),
                concept(
                    "hotels",
                    ["hotels", "lodging", "stays"],
                    "city",
                    "destination city",
                    "room type",
                    ["single room", "double room", "suite", "quad room"],
                    ["harbor inn", "grand plaza", "meadow lodge", "coastal resort"],
                ),
                concept(
                    "cars",
                    ["cars", "car hire", "rental vehicles"],
                    "pickup location",
                    "pickup point",
                    "car class",
                    ["compact", "midsize", "fullsize", "minivan"],
                    ["sedan bargain", "convertible", "electric hatchback", "pickup truck"],
                ),
                concept(
                    "cruises",
                    ["cruises", "sailings", "voyages"],
                    "departure port",
                    "port of call",
                    "cruise length",
                    ["weekend", "seven nights", "fortnight", "grand circuit"],
                    ["island hopper", "fjord explorer", "arctic passage", "tropical loop"],
                ),
            ],
            values: s(&[
                "paris", "tokyo", "lisbon", "cairo", "denver", "oslo", "lima", "seoul", "dublin",
                "miami", "nairobi", "quito",
            ]),
            actions: s(&["depart", "proceed", "launch", "embark", "dispatch", "venture"]),
            filler: s(&[
                "best fares guaranteed",
                "travel advisories",
                "loyalty miles",
                "baggage policy",
                "holiday offers",
                "passport tips",
                "airport lounges",
                "itinerary planner",
            ]),
        },
        Theme {
            domain: "shopping".into(),
            site_prefixes: s(&["shop", "mart", "cart", "bazaar", "deal"]),
            site_suffixes: s(&["hub", "zone", "box", "nest"]),
            concepts: vec![
                concept(
                    "electronics",
                    ["electronics", "gadgets", "devices"],
                    "product",
                    "brand model",
                    "brand",
                    ["acme", "zenith", "orbitron", "lumina"],
                    ["wireless earbuds", "fitness tracker", "tablet stand", "gaming mouse"],
                ),
                concept(
                    "clothing",
                    ["clothing", "apparel", "fashion"],
                    "garment",
                    "shirts jackets",
                    "size",
                    ["small", "medium", "large", "extra large"],
                    ["linen shirt", "denim jacket", "wool scarf", "rain coat"],
                ),
                concept(
                    "groceries",
                    ["groceries", "pantry", "food store"],
                    "ingredient",
                    "milk eggs",
                    "aisle",
                    ["produce", "bakery", "dairy", "frozen"],
                    ["organic apples", "rye loaf", "greek yogurt", "frozen berries"],
                ),
                concept(
                    "furniture",
                    ["furniture", "decor", "furnishings"],
                    "piece",
                    "sofa bench",
                    "material",
                    ["oak", "walnut", "steel", "rattan"],
                    ["sectional sofa", "nightstand", "bookshelf", "floor lamp"],
                ),
            ],
            values: s(&[
                "headphones", "sneakers", "blender", "backpack", "laptop", "camera", "jeans",
                "umbrella", "kettle", "hoodie", "printer", "sandals",
            ]),
            actions: s(&["purchase", "acquire", "obtain", "procure", "grab", "secure"]),
            filler: s(&[
                "complimentary shipping",
                "returns within thirty days",
                "store credit",
                "customer reviews",
                "flash sale",
                "match guarantee",
                "member rewards",
                "latest arrivals",
            ]),
        },
        Theme {
            domain: "entertainment".into(),
            site_prefixes: s(&["cine", "stream", "show", "reel", "stage"]),
            site_suffixes: s(&["flix", "max", "vault", "verse"]),
            concepts: vec![
                concept(
                    "movies",
                    ["movies", "films", "cinema"],
                    "title",
                    "film title",
                    "genre",
                    ["comedy", "drama", "thriller", "documentary"],
                    ["midnight premiere", "matinee screening", "director cut", "festival pick"],
                ),
                concept(
                    "music",
                    ["music", "songs", "albums"],
                    "artist",
                    "band singer",
                    "audio quality",
                    ["vinyl", "lossless", "hifi", "stereo"],
                    ["live session", "acoustic set", "greatest hits", "debut record"],
                ),
                concept(
                    "concerts",
                    ["concerts", "live events", "gigs"],
                    "venue",
                    "arena club",
                    "seating",
                    ["standing", "balcony", "orchestra", "lawn"],
                    ["opening night", "encore performance", "summer festival", "farewell gig"],
                ),
                concept(
                    "podcasts",
                    ["podcasts", "shows", "episodes"],
                    "topic",
                    "subject",
                    "duration",
                    ["short", "standard", "extended", "marathon"],
                    ["weekly digest", "interview special", "true crime", "science roundup"],
                ),
            ],
            values: s(&[
                "inception", "casablanca", "vertigo", "amadeus", "fargo", "rocky", "psycho",
                "gravity", "memento", "jaws", "alien", "heat",
            ]),
            actions: s(&["watch", "stream", "play", "queue", "enjoy", "start"]),
            filler: s(&[
                "trending now",
                "critics choice",
                "coming soon",
                "top charts",
                "award winners",
                "fan favorites",
                "backstage footage",
                "new releases",
            ]),
        },
        Theme {
            domain: "housing".into(),
            site_prefixes: s(&["nest", "haven", "abode", "dwell", "roof"]),
            site_suffixes: s(&["finder", "spot", "list", "key"]),
            concepts: vec![
                concept(
                    "apartments",
                    ["apartments", "flats", "units"],
                    "neighborhood",
                    "area",
                    "bedrooms",
                    ["studio", "loft", "duplex", "penthouse"],
                    ["loft near park", "sunny walkup", "riverside unit", "garden flat"],
                ),
                concept(
                    "houses",
                    ["houses", "residences", "properties"],
                    "town",
                    "town village",
                    "lot area",
                    ["quarter acre", "half acre", "acreage", "estate"],
                    ["colonial", "bungalow", "farmhouse", "townhouse"],
                ),
                concept(
                    "rentals",
                    ["rentals", "leases", "lettings"],
                    "district",
                    "postal district",
                    "lease term",
                    ["monthly", "semiannual", "yearly", "biennial"],
                    ["furnished studio", "shared house", "basement nook", "split duplex"],
                ),
                concept(
                    "agents",
                    ["agents", "realtors", "brokers"],
                    "agency",
                    "agency firm",
                    "specialty",
                    ["buyers", "sellers", "investors", "relocation"],
                    ["downtown office", "boutique firm", "luxury team", "novice advisor"],
                ),
            ],
            values: s(&[
                "brooklyn", "oakland", "austin", "portland", "boise", "tampa", "raleigh", "tucson",
                "omaha", "reno", "fresno", "akron",
            ]),
            actions: s(&["inquire", "apply", "contact", "schedule", "visit", "reserve"]),
            filler: s(&[
                "mortgage calculator",
                "house tours",
                "market trends",
                "moving checklist",
                "school ratings",
                "neighborhood guides",
                "virtual walkthrough",
                "sales history",
            ]),
        },
        Theme {
            domain: "dining".into(),
            site_prefixes: s(&["fork", "plate", "dish", "savor", "bistro"]),
            site_suffixes: s(&["table", "bite", "hall", "corner"]),
            concepts: vec![
                concept(
                    "restaurants",
                    ["restaurants", "eateries", "dining spots"],
                    "cuisine",
                    "thai sushi",
                    "price range",
                    ["budget", "moderate", "upscale", "splurge"],
                    ["rooftop grill", "noodle bar", "seaside cafe", "wine cellar"],
                ),
                concept(
                    "delivery",
                    ["delivery", "takeout", "doorstep meals"],
                    "address",
                    "street",
                    "timing",
                    ["asap", "scheduled", "tonight", "tomorrow"],
                    ["party bundle", "lunch combo", "late snack", "breakfast box"],
                ),
                concept(
                    "recipes",
                    ["recipes", "cookbooks", "meal ideas"],
                    "dish",
                    "pasta curry",
                    "diet",
                    ["vegan", "keto", "paleo", "gluten free"],
                    ["slow cooker stew", "sheet pan dinner", "quick salad", "sourdough starter"],
                ),
                concept(
                    "catering",
                    ["catering", "banquets", "private functions"],
                    "occasion",
                    "wedding party",
                    "guests",
                    ["dozen", "fifty", "hundred", "crowd"],
                    ["buffet spread", "plated dinner", "cocktail hour", "dessert table"],
                ),
            ],
            values: s(&[
                "ramen", "tacos", "paella", "curry", "pho", "falafel", "risotto", "gnocchi",
                "kimchi", "brisket", "ceviche", "pierogi",
            ]),
            actions: s(&["savor", "dine", "feast", "munch", "nibble", "taste"]),
            filler: s(&[
                "chef specials",
                "allergy information",
                "happy hour",
                "seasonal menu",
                "local farms",
                "gift vouchers",
                "kitchen stories",
                "tasting notes",
            ]),
        },
    ]
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ru", "ze", "po", "ta", "ne", "vi", "sa", "do", "gu", "fe", "bi", "xo", "ly",
];

/// Pseudo-word with a domain-unique suffix so vocabularies never collide.
fn pseudo(rng: &mut ChaCha8Rng, tag: &str) -> String {
    let n = rng.gen_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    w.push_str(tag);
    w
}

fn pseudo_theme(index: usize, rng: &mut ChaCha8Rng) -> Theme {
    let tag = format!("q{index}");
    let mut used = std::collections::BTreeSet::new();
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo(rng, &tag);
        if used.insert(w.clone()) {
            return w;
        }
    };
    let mut words = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| word(rng)).collect::<Vec<_>>();
    let concepts = (0..4)
        .map(|_| {
            let syn = words(rng, 3);
            Concept {
                name: syn[0].clone(),
                synonyms: syn,
                field: words(rng, 1).remove(0),
                placeholder: words(rng, 1).remove(0),
                select_label: words(rng, 1).remove(0),
                options: words(rng, 4),
                items: words(rng, 4),
            }
        })
        .collect();
    Theme {
        domain: format!("domain{index}"),
        site_prefixes: words(rng, 5),
        site_suffixes: words(rng, 4),
        concepts,
        values: words(rng, 12),
        actions: words(rng, 6),
        filler: words(rng, 8),
    }
}

/// Theme for domain `index`: curated for the first few, generated after.
pub(crate) fn theme(index: usize, rng: &mut ChaCha8Rng) -> Theme {
    let curated = curated();
    if index < curated.len() {
        curated.into_iter().nth(index).expect("in range")
    } else {
        pseudo_theme(index, rng)
    }
}

#[cfg(test)]
pub(crate) fn curated_themes() -> Vec<Theme> {
    curated()
}

#[cfg(test)]
pub(crate) fn theme_vocabulary(t: &Theme) -> std::collections::BTreeSet<String> {
    use crate::text::unigrams;
    let mut phrases: Vec<&String> = Vec::new();
    for c in &t.concepts {
        phrases.push(&c.name);
        phrases.extend(&c.synonyms);
        phrases.push(&c.field);
        phrases.push(&c.placeholder);
        phrases.push(&c.select_label);
        phrases.extend(&c.options);
        phrases.extend(&c.items);
    }
    phrases.extend(&t.values);
    phrases.extend(&t.actions);
    phrases.extend(&t.filler);
    phrases.iter().flat_map(|p| unigrams(p)).collect()
}

#[cfg(test)]
pub(crate) fn shared_vocabulary() -> std::collections::BTreeSet<String> {
    use crate::text::unigrams;
    let mut phrases: Vec<String> = vec![
        CHROME_HOME.into(),
        CHROME_NAME_FIELD.into(),
        CHROME_QTY_FIELD.into(),
        CHROME_CODE_FIELD.into(),
        CHROME_NOTICE.into(),
        CHROME_DONE.into(),
        CHROME_WELCOME.into(),
    ];
    phrases.extend(CHROME_LINKS.iter().map(|(l, _)| (*l).to_owned()));
    phrases.extend(CHROME_QTY_OPTIONS.iter().map(|s| (*s).to_owned()));
    phrases.extend(NAMES.iter().map(|s| (*s).to_owned()));
    phrases.extend(CODES.iter().map(|s| (*s).to_owned()));
    for t in TEMPLATE_NAV
        .iter()
        .chain(&TEMPLATE_SEARCH)
        .chain(&TEMPLATE_FILTER)
        .chain(&TEMPLATE_DETAIL)
        .chain(&TEMPLATE_BOOK)
        .chain(&TEMPLATE_FULL)
    {
        phrases.push(t.replace(['{', '}'], " "));
    }
    phrases
        .iter()
        .flat_map(|p| unigrams(p))
        .filter(|w| !matches!(w.as_str(), "c" | "v" | "o" | "i" | "n" | "q" | "k"))
        .collect()
}
