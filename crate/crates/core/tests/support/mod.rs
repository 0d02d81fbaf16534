pub mod nlp_battery;
