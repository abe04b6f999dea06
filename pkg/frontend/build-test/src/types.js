/** Payload shapes of the review server's JSON API, field names verbatim. */
export {};
