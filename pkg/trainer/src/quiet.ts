/**
 * Route console logging to stderr before anything else loads. stdout carries
 * protocol messages only; any library banner or warning on stdout would
 * corrupt the stream.
 */

/* eslint-disable no-console */
console.log = (...args: unknown[]) => console.error(...args);
console.info = (...args: unknown[]) => console.error(...args);
console.warn = (...args: unknown[]) => console.error(...args);

export {};
